// Command-line frontend: synthetic data generation, model training, story
// extraction, prediction and summarization evaluation, transition-graph
// export and story-length sweeps. All randomness flows from --seed; output
// files are byte-identical across reruns with the same configuration.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "srnn/all.hpp"
#include "srnn/parallel.hpp"

namespace {

using srnn::Error;
using srnn::ErrorCode;
using srnn::json;
using srnn::require;

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string mode = "skip";
  std::size_t story_len = 10;  // config key: n
  std::size_t samples = 500;
  bool normalize = false;

  std::string data;
  std::string model;
  std::string out;
  std::string truth;
  std::string album;

  srnn::TrainConfig train;
  double split_ratio = 0.9;

  srnn::SyntheticSpec synth;

  std::string horizon = "both";
  std::string methods;  // empty = per-command default
  std::size_t cluster_k = 100;
  std::size_t stories_per_album = 1;
  std::size_t graph_nodes = 10;
  std::vector<std::size_t> sweep_n = {5, 10, 20};
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used == value.size()) return parsed;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, "config key '" + key + "': cannot parse number '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long parsed = std::stoull(value, &used);
    if (used == value.size()) return parsed;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, "config key '" + key + "': cannot parse integer '" + value + "'");
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorCode::config, "config key '" + key + "': expected true or false, got '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_size(key, trim(part)));
  require(!out.empty(), ErrorCode::config, "config key '" + key + "': empty list");
  return out;
}

std::vector<std::string> split_csv(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "threads") cfg.threads = parse_size(key, value);
  else if (key == "mode") cfg.mode = value;
  else if (key == "n") cfg.story_len = parse_size(key, value);
  else if (key == "samples") cfg.samples = parse_size(key, value);
  else if (key == "normalize") cfg.normalize = parse_bool(key, value);
  else if (key == "data") cfg.data = value;
  else if (key == "model") cfg.model = value;
  else if (key == "out") cfg.out = value;
  else if (key == "truth") cfg.truth = value;
  else if (key == "album") cfg.album = value;
  else if (key == "learning_rate") cfg.train.learning_rate = parse_double(key, value);
  else if (key == "momentum") cfg.train.momentum = parse_double(key, value);
  else if (key == "weight_decay") cfg.train.weight_decay = parse_double(key, value);
  else if (key == "hidden") cfg.train.hidden = parse_size(key, value);
  else if (key == "grad_clip") cfg.train.grad_clip = parse_double(key, value);
  else if (key == "plateau_patience") cfg.train.plateau_patience = parse_size(key, value);
  else if (key == "lr_decay_factor") cfg.train.lr_decay_factor = parse_double(key, value);
  else if (key == "max_epochs") cfg.train.max_epochs = parse_size(key, value);
  else if (key == "split_ratio") cfg.split_ratio = parse_double(key, value);
  else if (key == "num_states") cfg.synth.num_states = parse_size(key, value);
  else if (key == "dim") cfg.synth.dim = parse_size(key, value);
  else if (key == "prototype_noise") cfg.synth.prototype_noise = parse_double(key, value);
  else if (key == "emission_noise") cfg.synth.emission_noise = parse_double(key, value);
  else if (key == "repeats_min") cfg.synth.repeats_min = parse_size(key, value);
  else if (key == "repeats_max") cfg.synth.repeats_max = parse_size(key, value);
  else if (key == "distractor_prob") cfg.synth.distractor_prob = parse_double(key, value);
  else if (key == "num_albums") cfg.synth.num_albums = parse_size(key, value);
  else if (key == "horizon") cfg.horizon = value;
  else if (key == "methods") cfg.methods = value;
  else if (key == "cluster_k") cfg.cluster_k = parse_size(key, value);
  else if (key == "stories_per_album") cfg.stories_per_album = parse_size(key, value);
  else if (key == "graph_nodes") cfg.graph_nodes = parse_size(key, value);
  else if (key == "sweep_n") cfg.sweep_n = parse_size_list(key, value);
  else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::config, "cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    require(eq != std::string::npos, ErrorCode::config,
            path + ":" + std::to_string(line_no) + ": expected key=value");
    apply_config_entry(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

json config_echo(const RunConfig& cfg, const std::string& command) {
  return json{{"command", command},
              {"seed", cfg.seed},
              {"threads", cfg.threads},
              {"mode", cfg.mode},
              {"n", cfg.story_len},
              {"samples", cfg.samples},
              {"normalize", cfg.normalize},
              {"data", cfg.data},
              {"model", cfg.model},
              {"out", cfg.out},
              {"truth", cfg.truth},
              {"album", cfg.album},
              {"learning_rate", cfg.train.learning_rate},
              {"momentum", cfg.train.momentum},
              {"weight_decay", cfg.train.weight_decay},
              {"hidden", cfg.train.hidden},
              {"grad_clip", cfg.train.grad_clip},
              {"plateau_patience", cfg.train.plateau_patience},
              {"lr_decay_factor", cfg.train.lr_decay_factor},
              {"max_epochs", cfg.train.max_epochs},
              {"split_ratio", cfg.split_ratio},
              {"num_states", cfg.synth.num_states},
              {"dim", cfg.synth.dim},
              {"prototype_noise", cfg.synth.prototype_noise},
              {"emission_noise", cfg.synth.emission_noise},
              {"repeats_min", cfg.synth.repeats_min},
              {"repeats_max", cfg.synth.repeats_max},
              {"distractor_prob", cfg.synth.distractor_prob},
              {"num_albums", cfg.synth.num_albums},
              {"horizon", cfg.horizon},
              {"methods", cfg.methods},
              {"cluster_k", cfg.cluster_k},
              {"stories_per_album", cfg.stories_per_album},
              {"graph_nodes", cfg.graph_nodes},
              {"sweep_n", cfg.sweep_n}};
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  require(out.good(), ErrorCode::io, "write failed for " + path);
}

void require_option(const std::string& value, const std::string& name) {
  require(!value.empty(), ErrorCode::config, "missing required option --" + name);
}

srnn::Dataset load_input(const RunConfig& cfg) {
  require_option(cfg.data, "data");
  srnn::Dataset ds = srnn::load_dataset(cfg.data);
  if (cfg.normalize) ds = srnn::l2_normalize(ds);
  return ds;
}

std::vector<std::string> effective_methods(const RunConfig& cfg, const std::string& fallback) {
  const std::vector<std::string> methods = split_csv(cfg.methods.empty() ? fallback : cfg.methods);
  require(!methods.empty(), ErrorCode::config, "config key 'methods': empty list");
  return methods;
}

// ---------------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg) {
  require_option(cfg.out, "out");
  srnn::SyntheticSpec spec = cfg.synth;
  spec.seed = cfg.seed;
  spec.validate();
  auto [ds, truth] = srnn::gen_synthetic(spec);
  const std::string manifest = srnn::write_dataset(ds, cfg.out);
  srnn::write_truth(truth, (std::filesystem::path(cfg.out) / "truth.json").string());
  write_json_file((std::filesystem::path(cfg.out) / "config.json").string(),
                  json{{"config", config_echo(cfg, "gen")}});
  std::size_t images = 0;
  for (const srnn::Album& album : ds.albums) images += album.size();
  std::printf("wrote %zu albums (%zu images, dim %zu) to %s\n", ds.albums.size(), images,
              ds.dim, manifest.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  require_option(cfg.model, "model");
  const srnn::StoryMode mode = srnn::story_mode_from_string(cfg.mode);
  srnn::TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  train_cfg.validate();
  require(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0, ErrorCode::config,
          "split_ratio must lie strictly between 0 and 1");
  require(cfg.story_len >= 2, ErrorCode::config, "n must be at least 2");

  const srnn::Dataset ds = load_input(cfg);
  const srnn::RngStream root(cfg.seed);
  srnn::RngStream split_rng = root.substream(srnn::streams::kSplit);
  auto [train_ds, val_ds] = srnn::split_train_val(ds, cfg.split_ratio, split_rng);

  srnn::SrnnModel model =
      srnn::make_initial_model(ds.dim, train_cfg, cfg.story_len, mode, ds.concept_name);
  srnn::EmTrainResult result = srnn::train(std::move(model), train_ds, val_ds, train_cfg, root);
  srnn::save_model(result.model, train_cfg, result.history, cfg.model);
  write_json_file(cfg.model + ".history.json",
                  json{{"config", config_echo(cfg, "train")}, {"history", result.history}});
  if (result.history.empty()) {
    std::printf("trained 0 epochs, model written to %s\n", cfg.model.c_str());
  } else {
    std::printf("trained %zu epochs, final train nll %.4f, val score %.4f, model written to %s\n",
                result.history.size(), result.history.back().mean_train_nll,
                result.history.back().val_score, cfg.model.c_str());
  }
  return 0;
}

// Best story per usable album, parallel over albums with per-album streams.
std::vector<srnn::StorySample> collect_stories(const srnn::SrnnModel& model,
                                               const srnn::Dataset& ds, const RunConfig& cfg,
                                               std::size_t per_album) {
  const srnn::RngStream root(cfg.seed);
  std::vector<std::size_t> usable;
  for (std::size_t a = 0; a < ds.albums.size(); ++a) {
    if (ds.albums[a].size() >= model.story_len) {
      usable.push_back(a);
    } else {
      std::fprintf(stderr, "warning: skipping album '%s' (%zu items < story length %zu)\n",
                   ds.albums[a].id.c_str(), ds.albums[a].size(), model.story_len);
    }
  }
  require(!usable.empty(), ErrorCode::album_too_short,
          "no album has at least " + std::to_string(model.story_len) + " items");
  std::vector<srnn::StorySample> stories(usable.size() * per_album);
  srnn::parallel_for(usable.size(), cfg.threads, [&](std::size_t i) {
    const srnn::Album& album = ds.albums[usable[i]];
    for (std::size_t s = 0; s < per_album; ++s) {
      srnn::RngStream rng = root.substream(srnn::streams::kStories, usable[i], s);
      stories[i * per_album + s] = srnn::best_story(model, album, cfg.samples, rng);
    }
  });
  return stories;
}

int cmd_storyline(const RunConfig& cfg) {
  require_option(cfg.model, "model");
  require_option(cfg.out, "out");
  const srnn::SrnnModel model = srnn::load_model(cfg.model).model;
  const srnn::Dataset ds = load_input(cfg);
  require(ds.dim == model.params.dim(), ErrorCode::dimension_mismatch,
          "dataset dimension does not match the model");
  const std::vector<srnn::StorySample> stories = collect_stories(model, ds, cfg, 1);
  write_json_file(cfg.out, json{{"config", config_echo(cfg, "storyline")}, {"stories", stories}});
  std::printf("wrote %zu stories to %s\n", stories.size(), cfg.out.c_str());
  return 0;
}

int cmd_summarize(const RunConfig& cfg) {
  require_option(cfg.model, "model");
  require_option(cfg.out, "out");
  const srnn::SrnnModel model = srnn::load_model(cfg.model).model;
  const srnn::Dataset ds = load_input(cfg);
  require(ds.dim == model.params.dim(), ErrorCode::dimension_mismatch,
          "dataset dimension does not match the model");
  const srnn::Album* album = nullptr;
  if (cfg.album.empty()) {
    album = &ds.albums.front();
  } else {
    for (const srnn::Album& a : ds.albums)
      if (a.id == cfg.album) album = &a;
    require(album != nullptr, ErrorCode::invalid_argument,
            "album '" + cfg.album + "' not found in the dataset");
  }
  srnn::RngStream rng = srnn::RngStream(cfg.seed).substream(srnn::streams::kStories, 0, 0);
  const srnn::StorySample story = srnn::best_story(model, *album, cfg.samples, rng);
  write_json_file(cfg.out, json{{"config", config_echo(cfg, "summarize")},
                                {"stories", json::array({story})}});
  std::printf("album '%s': summary of %zu images, loglik %.4f, written to %s\n",
              album->id.c_str(), story.z.size(), story.loglik, cfg.out.c_str());
  return 0;
}

int cmd_predict(const RunConfig& cfg) {
  require_option(cfg.out, "out");
  require_option(cfg.truth, "truth");
  const std::vector<std::string> methods = effective_methods(cfg, "srnn,nn,fi,random");
  const srnn::Dataset ds = load_input(cfg);
  const srnn::PlantedTruth truth = srnn::load_truth(cfg.truth);

  std::optional<srnn::SrnnModel> model;
  for (const std::string& m : methods)
    if (m == "srnn") {
      require_option(cfg.model, "model");
      model = srnn::load_model(cfg.model).model;
      require(ds.dim == model->params.dim(), ErrorCode::dimension_mismatch,
              "dataset dimension does not match the model");
    }

  std::vector<srnn::eval::Horizon> horizons;
  if (cfg.horizon == "both") {
    horizons = {srnn::eval::Horizon::long_term, srnn::eval::Horizon::short_term};
  } else {
    horizons = {srnn::eval::horizon_from_string(cfg.horizon)};
  }

  const srnn::RngStream root(cfg.seed);
  std::vector<srnn::eval::EvalReport> reports;
  for (const srnn::eval::Horizon horizon : horizons) {
    const auto instances = srnn::eval::build_prediction_set(ds, truth, horizon, root);
    if (instances.empty()) {
      std::fprintf(stderr, "warning: no %s-term instances, horizon skipped\n",
                   srnn::eval::to_string(horizon));
      continue;
    }
    for (const std::string& method : methods) {
      srnn::eval::Predictor predictor;
      if (method == "srnn") predictor = srnn::eval::srnn_predictor(*model);
      else if (method == "nn") predictor = srnn::eval::nn_predictor();
      else if (method == "fi") predictor = srnn::eval::fi_predictor();
      else if (method == "random") predictor = srnn::eval::random_predictor(cfg.seed);
      else throw Error(ErrorCode::config, "unknown prediction method '" + method + "'");
      reports.push_back(srnn::eval::eval_prediction(method, predictor, ds, instances));
    }
  }
  require(!reports.empty(), ErrorCode::invalid_argument, "no prediction instances at all");
  write_json_file(cfg.out, json{{"config", config_echo(cfg, "predict")}, {"reports", reports}});
  std::fputs(srnn::eval::render_table(reports).c_str(), stdout);
  std::printf("report written to %s\n", cfg.out.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  require_option(cfg.out, "out");
  require_option(cfg.truth, "truth");
  const std::vector<std::string> methods = effective_methods(cfg, "srnn,sample,local");
  const srnn::Dataset ds = load_input(cfg);
  const srnn::PlantedTruth truth = srnn::load_truth(cfg.truth);

  std::optional<srnn::SrnnModel> model;
  for (const std::string& m : methods)
    if (m == "srnn") {
      require_option(cfg.model, "model");
      model = srnn::load_model(cfg.model).model;
      require(ds.dim == model->params.dim(), ErrorCode::dimension_mismatch,
              "dataset dimension does not match the model");
    }
  const std::size_t story_len = model ? model->story_len : cfg.story_len;
  require(story_len >= 2, ErrorCode::config, "n must be at least 2");

  std::vector<std::size_t> usable;
  for (std::size_t a = 0; a < ds.albums.size(); ++a) {
    if (ds.albums[a].size() < story_len) {
      std::fprintf(stderr, "warning: skipping album '%s' (%zu items < story length %zu)\n",
                   ds.albums[a].id.c_str(), ds.albums[a].size(), story_len);
      continue;
    }
    if (!truth.albums.count(ds.albums[a].id)) {
      std::fprintf(stderr, "warning: album '%s' has no ground truth, skipped\n",
                   ds.albums[a].id.c_str());
      continue;
    }
    usable.push_back(a);
  }
  require(!usable.empty(), ErrorCode::invalid_argument, "no usable albums to evaluate");

  const srnn::RngStream root(cfg.seed);
  json extra_models = json::object();

  // Methods that need a one-off global fit.
  std::optional<srnn::baselines::KMeansModel> global_kmeans;
  std::optional<srnn::baselines::ClusterRnnModel> crnn;
  for (const std::string& method : methods) {
    if (method == "global" && !global_kmeans) {
      std::vector<srnn::Vector> pooled;
      for (std::size_t a : usable)
        for (const srnn::AlbumItem& item : ds.albums[a].items) pooled.push_back(item.feature);
      srnn::RngStream rng = root.substream(srnn::streams::kBaseline, 100);
      global_kmeans = srnn::baselines::kmeans_fit(pooled, story_len, rng);
      extra_models["kmeans_global"] = *global_kmeans;
    } else if (method == "crnn" && !crnn) {
      srnn::TrainConfig crnn_cfg = cfg.train;
      crnn_cfg.seed = cfg.seed;
      srnn::RngStream rng = root.substream(srnn::streams::kBaseline, 200);
      crnn = srnn::baselines::cluster_rnn_train(ds, cfg.cluster_k, crnn_cfg, rng);
    }
  }

  std::vector<srnn::eval::EvalReport> reports;
  for (const std::string& method : methods) {
    std::vector<srnn::eval::RecoveryMetrics> per_album;
    for (std::size_t i = 0; i < usable.size(); ++i) {
      const srnn::Album& album = ds.albums[usable[i]];
      const srnn::AlbumTruth& at = truth.albums.at(album.id);
      require(at.labels.size() == album.size(), ErrorCode::corrupt_format,
              "album '" + album.id + "': label count does not match album size");
      std::vector<std::size_t> picks;
      if (method == "srnn") {
        srnn::RngStream rng = root.substream(srnn::streams::kStories, usable[i], 0);
        const srnn::StorySample story = srnn::best_story(*model, album, cfg.samples, rng);
        per_album.push_back(srnn::eval::eval_storyline_recovery(story, at, truth.num_states));
        continue;
      } else if (method == "sample") {
        std::vector<std::size_t> pool(album.size());
        std::iota(pool.begin(), pool.end(), 0);
        srnn::RngStream rng = root.substream(srnn::streams::kBaseline, 300, usable[i]);
        picks = srnn::baselines::sample_uniform(pool, story_len, rng);
      } else if (method == "local") {
        std::vector<srnn::Vector> points;
        for (const srnn::AlbumItem& item : album.items) points.push_back(item.feature);
        srnn::RngStream rng = root.substream(srnn::streams::kBaseline, 400, usable[i]);
        const auto km = srnn::baselines::kmeans_fit(points, story_len, rng);
        picks = srnn::baselines::kmeans_select(km, points);
      } else if (method == "global") {
        std::vector<srnn::Vector> points;
        for (const srnn::AlbumItem& item : album.items) points.push_back(item.feature);
        picks = srnn::baselines::kmeans_select(*global_kmeans, points);
      } else if (method == "crnn") {
        srnn::RngStream rng = root.substream(srnn::streams::kBaseline, 500, usable[i]);
        picks = srnn::baselines::cluster_rnn_select(*crnn, album, story_len, rng);
      } else {
        throw Error(ErrorCode::config, "unknown eval method '" + method + "'");
      }
      if (picks.size() < 2) {
        std::fprintf(stderr, "warning: method '%s' picked %zu images on album '%s', skipped\n",
                     method.c_str(), picks.size(), album.id.c_str());
        continue;
      }
      srnn::StorySample story;
      story.album_id = album.id;
      story.z = srnn::StoryIndices(picks, album.size());
      per_album.push_back(srnn::eval::eval_storyline_recovery(story, at, truth.num_states));
    }
    if (per_album.empty()) {
      std::fprintf(stderr, "warning: method '%s' produced no stories, skipped\n", method.c_str());
      continue;
    }
    reports.push_back(srnn::eval::summarize_recovery(method, per_album));
  }
  require(!reports.empty(), ErrorCode::invalid_argument, "no method produced a report");

  json out_json = {{"config", config_echo(cfg, "eval")}, {"reports", reports}};
  if (!extra_models.empty()) out_json["models"] = extra_models;
  write_json_file(cfg.out, out_json);
  std::fputs(srnn::eval::render_table(reports).c_str(), stdout);
  std::printf("report written to %s\n", cfg.out.c_str());
  return 0;
}

int cmd_export_graph(const RunConfig& cfg) {
  require_option(cfg.model, "model");
  require_option(cfg.out, "out");
  require(cfg.stories_per_album >= 1, ErrorCode::config, "stories_per_album must be >= 1");
  const srnn::SrnnModel model = srnn::load_model(cfg.model).model;
  const srnn::Dataset ds = load_input(cfg);
  require(ds.dim == model.params.dim(), ErrorCode::dimension_mismatch,
          "dataset dimension does not match the model");
  const std::vector<srnn::StorySample> stories =
      collect_stories(model, ds, cfg, cfg.stories_per_album);
  std::ofstream out(cfg.out, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + cfg.out + " for writing");
  out << "// config: " << config_echo(cfg, "export-graph").dump() << "\n";
  const srnn::eval::GraphExportStats stats =
      srnn::eval::export_transition_graph(stories, ds, out, cfg.graph_nodes);
  require(out.good(), ErrorCode::io, "write failed for " + cfg.out);
  std::printf("wrote %zu nodes, %zu edges (%llu transitions total) to %s\n", stats.nodes_emitted,
              stats.edges_emitted, static_cast<unsigned long long>(stats.total_transitions),
              cfg.out.c_str());
  return 0;
}

int cmd_nsweep(const RunConfig& cfg) {
  require_option(cfg.out, "out");
  require_option(cfg.truth, "truth");
  const srnn::StoryMode mode = srnn::story_mode_from_string(cfg.mode);
  srnn::TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  train_cfg.validate();
  require(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0, ErrorCode::config,
          "split_ratio must lie strictly between 0 and 1");

  const srnn::Dataset ds = load_input(cfg);
  const srnn::PlantedTruth truth = srnn::load_truth(cfg.truth);
  srnn::RngStream split_rng = srnn::RngStream(cfg.seed).substream(srnn::streams::kSplit);
  auto [train_ds, val_ds] = srnn::split_train_val(ds, cfg.split_ratio, split_rng);

  const std::vector<srnn::eval::SweepRow> rows =
      srnn::eval::n_sweep(train_ds, val_ds, truth, cfg.sweep_n, train_cfg, mode);
  write_json_file(cfg.out, json{{"config", config_echo(cfg, "nsweep")}, {"rows", rows}});

  std::printf("%8s  %12s  %10s  %13s  %11s\n", "n", "long_acc", "long_n", "short_acc",
              "short_n");
  for (const srnn::eval::SweepRow& row : rows)
    std::printf("%8zu  %12.4f  %10zu  %13.4f  %11zu\n", row.story_len, row.long_accuracy,
                row.long_count, row.short_accuracy, row.short_count);
  std::printf("table written to %s\n", cfg.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Storyline models over photo-album feature sequences"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> opt_seed;
  std::optional<std::size_t> opt_threads, opt_n, opt_samples;
  std::optional<std::string> opt_mode, opt_data, opt_model, opt_out, opt_truth, opt_album,
      opt_horizon, opt_methods;

  app.add_option("--config", config_path, "flat key=value configuration file");
  app.add_option("--seed", opt_seed, "master random seed");
  app.add_option("--threads", opt_threads, "evaluation parallelism (default 1)");
  app.add_option("--n", opt_n, "story length for training and sweeps");
  app.add_option("--samples", opt_samples, "posterior story draws per album (default 500)");
  app.add_option("--mode", opt_mode, "story mode: skip, noskip or diverse");
  app.add_option("--data", opt_data, "dataset manifest path");
  app.add_option("--model", opt_model, "model file path");
  app.add_option("--out", opt_out, "output path (file or directory by command)");
  app.add_option("--truth", opt_truth, "ground-truth JSON path");
  app.add_option("--album", opt_album, "album id for summarize");
  app.add_option("--horizon", opt_horizon, "prediction horizon: long, short or both");
  app.add_option("--methods", opt_methods, "comma-separated method list");

  const std::map<std::string, int (*)(const RunConfig&)> commands = {
      {"gen", cmd_gen},           {"train", cmd_train},
      {"storyline", cmd_storyline}, {"summarize", cmd_summarize},
      {"predict", cmd_predict},   {"eval", cmd_eval},
      {"export-graph", cmd_export_graph}, {"nsweep", cmd_nsweep}};

  // fallthrough lets the shared options above appear after the subcommand
  app.add_subcommand("gen", "generate a synthetic dataset with planted truth")->fallthrough();
  app.add_subcommand("train", "train a storyline model")->fallthrough();
  app.add_subcommand("storyline", "extract the best story per album")->fallthrough();
  app.add_subcommand("summarize", "extract the story of a single album")->fallthrough();
  app.add_subcommand("predict", "five-way next-image prediction evaluation")->fallthrough();
  app.add_subcommand("eval", "storyline recovery evaluation against planted truth")
      ->fallthrough();
  app.add_subcommand("export-graph", "export selected-image transition graph as DOT")
      ->fallthrough();
  app.add_subcommand("nsweep", "train and evaluate across story lengths")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion")
      return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) load_config_file(cfg, config_path);
    if (opt_seed) cfg.seed = *opt_seed;
    if (opt_threads) cfg.threads = *opt_threads;
    if (opt_n) cfg.story_len = *opt_n;
    if (opt_samples) cfg.samples = *opt_samples;
    if (opt_mode) cfg.mode = *opt_mode;
    if (opt_data) cfg.data = *opt_data;
    if (opt_model) cfg.model = *opt_model;
    if (opt_out) cfg.out = *opt_out;
    if (opt_truth) cfg.truth = *opt_truth;
    if (opt_album) cfg.album = *opt_album;
    if (opt_horizon) cfg.horizon = *opt_horizon;
    if (opt_methods) cfg.methods = *opt_methods;

    require(cfg.threads >= 1, ErrorCode::config, "threads must be at least 1");
    require(cfg.samples >= 1, ErrorCode::config, "samples must be at least 1");
    require(cfg.horizon == "both" || cfg.horizon == "long" || cfg.horizon == "short",
            ErrorCode::config, "horizon must be long, short or both");
    srnn::story_mode_from_string(cfg.mode);  // rejects unknown modes up front

    const std::string command = app.get_subcommands().front()->get_name();
    return commands.at(command)(cfg);
  } catch (const Error& e) {
    std::cerr << "error (" << srnn::error_code_name(e.code()) << "): " << e.what() << "\n";
    return (e.code() == ErrorCode::config || e.code() == ErrorCode::invalid_argument) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "srnn/baselines.hpp"
#include "srnn/data.hpp"
#include "srnn/error.hpp"
#include "srnn/linalg.hpp"
#include "srnn/rng.hpp"
#include "srnn/rnn.hpp"
#include "srnn/story.hpp"

namespace srnn {

// How training picks the story indices for each album.
//   skip:    latent ordered subsets sampled per epoch (the full model)
//   noskip:  always the first N items
//   diverse: a k-means++ subset of the album, fixed up front
enum class StoryMode { skip, noskip, diverse };

inline const char* to_string(StoryMode mode) {
  switch (mode) {
    case StoryMode::skip: return "skip";
    case StoryMode::noskip: return "noskip";
    case StoryMode::diverse: return "diverse";
  }
  return "unknown";
}

inline StoryMode story_mode_from_string(const std::string& s) {
  if (s == "skip") return StoryMode::skip;
  if (s == "noskip") return StoryMode::noskip;
  if (s == "diverse") return StoryMode::diverse;
  throw Error(ErrorCode::config, "unknown mode '" + s + "' (expected skip, noskip or diverse)");
}

struct SrnnModel {
  RnnParams params;
  std::size_t story_len = 10;  // N
  StoryMode mode = StoryMode::skip;
  std::string concept_name;
};

struct StorySample {
  std::string album_id;
  StoryIndices z;
  double loglik = 0.0;  // model log-likelihood of z's image sequence
};

// Window of next-index choices open after the n-th pick (0-based inclusive
// bounds): the next index must follow z_prev and still leave room for the
// remaining story entries.
inline std::pair<std::size_t, std::size_t> feasible_range(std::size_t z_prev,
                                                          std::size_t picks_made,
                                                          std::size_t story_len,
                                                          std::size_t album_len) {
  require(story_len >= 2 && album_len >= story_len, ErrorCode::invalid_argument,
          "feasible_range: need album_len >= story_len >= 2");
  require(picks_made >= 1 && picks_made < story_len, ErrorCode::invalid_argument,
          "feasible_range: picks_made out of range");
  require(z_prev < album_len, ErrorCode::invalid_argument,
          "feasible_range: z_prev out of range");
  const std::size_t lo = z_prev + 1;
  const std::size_t hi = album_len - story_len + picks_made;
  require(lo <= hi, ErrorCode::infeasible,
          "no feasible continuation after index " + std::to_string(z_prev) + " with " +
              std::to_string(story_len - picks_made) + " picks left in an album of " +
              std::to_string(album_len));
  return {lo, hi};
}

// log P(z) under the sequential prior: the first index uniform over the
// T-N+1 feasible starts, each later index uniform over its feasible window.
inline double log_prior(const StoryIndices& z, std::size_t album_len) {
  const std::size_t n = z.size();
  require(album_len >= n, ErrorCode::invalid_argument, "log_prior: story longer than album");
  double lp = -std::log(static_cast<double>(album_len - n + 1));
  for (std::size_t picks = 1; picks < n; ++picks) {
    const auto [lo, hi] = feasible_range(z[picks - 1], picks, n, album_len);
    require(z[picks] >= lo && z[picks] <= hi, ErrorCode::infeasible,
            "log_prior: story violates the feasible windows");
    lp -= std::log(static_cast<double>(hi - lo + 1));
  }
  return lp;
}

// One posterior draw of the latent story: the first index uniform over
// feasible starts, every later index from the softmax of readout scores
// restricted to the feasible window. (The full-future softmax multiplied by
// the uniform feasible prior and renormalized is exactly the window softmax,
// so the window form is used directly.)
inline StoryIndices estep_sample_z(const SrnnModel& model, const Album& album,
                                   RngStream& rng) {
  require(model.mode == StoryMode::skip, ErrorCode::invalid_argument,
          "estep_sample_z: model mode must be skip");
  const std::size_t n = model.story_len;
  const std::size_t t = album.size();
  require(n >= 2, ErrorCode::invalid_argument, "estep_sample_z: story length must be >= 2");
  require(t >= n, ErrorCode::album_too_short,
          "album '" + album.id + "' has " + std::to_string(t) + " items, story needs " +
              std::to_string(n));

  std::vector<std::size_t> z;
  z.reserve(n);
  z.push_back(static_cast<std::size_t>(rng.next_below(t - n + 1)));
  Vector h(model.params.hidden(), 0.0);
  for (std::size_t picks = 1; picks < n; ++picks) {
    StepOutput s = forward_step(model.params, album.feature(z.back()), h);
    h = std::move(s.h);
    const auto [lo, hi] = feasible_range(z.back(), picks, n, t);
    const Vector probs = stable_softmax(detail::window_scores(s.y, album, lo, hi + 1));
    z.push_back(lo + sample_categorical(probs, rng));
  }
  return StoryIndices(std::move(z), t);
}

// Best of count posterior draws, ranked by model log-likelihood of the image
// sequence alone; exact ties go to the lexicographically smallest z. Draws
// come sequentially from one stream, so the best over count' > count draws
// is always at least as good.
inline StorySample sample_storylines(const SrnnModel& model, const Album& album,
                                     std::size_t count, RngStream& rng) {
  require(count >= 1, ErrorCode::invalid_argument, "sample_storylines: count must be >= 1");
  StorySample best;
  best.album_id = album.id;
  best.loglik = -std::numeric_limits<double>::infinity();
  bool have = false;
  for (std::size_t i = 0; i < count; ++i) {
    StoryIndices z = estep_sample_z(model, album, rng);
    const double ll = -sequence_nll(model.params, album, z);
    if (!have || ll > best.loglik || (ll == best.loglik && z < best.z)) {
      have = true;
      best.loglik = ll;
      best.z = std::move(z);
    }
  }
  return best;
}

// k-means++ seeded subset of the album's images, returned in album order.
inline StoryIndices diverse_subset(const Album& album, std::size_t k, RngStream& rng) {
  require(k >= 2, ErrorCode::invalid_argument, "diverse_subset: need k >= 2");
  require(album.size() >= k, ErrorCode::album_too_short,
          "album '" + album.id + "' has " + std::to_string(album.size()) +
              " items, subset needs " + std::to_string(k));
  std::vector<Vector> points;
  points.reserve(album.size());
  for (const AlbumItem& item : album.items) points.push_back(item.feature);
  std::vector<std::size_t> picks = baselines::kmeanspp_indices(points, k, rng);
  std::sort(picks.begin(), picks.end());
  return StoryIndices(std::move(picks), album.size());
}

// The story a given model tells about an album: posterior sampling for skip
// (best of `samples` draws), the forced prefix for noskip, the cached-free
// k-means++ subset for diverse. All three report the model log-likelihood.
inline StorySample best_story(const SrnnModel& model, const Album& album,
                              std::size_t samples, RngStream& rng) {
  switch (model.mode) {
    case StoryMode::skip:
      return sample_storylines(model, album, samples, rng);
    case StoryMode::noskip: {
      require(album.size() >= model.story_len, ErrorCode::album_too_short,
              "album '" + album.id + "' shorter than story length");
      StorySample s;
      s.album_id = album.id;
      s.z = StoryIndices::prefix(model.story_len, album.size());
      s.loglik = -sequence_nll(model.params, album, s.z);
      return s;
    }
    case StoryMode::diverse: {
      StorySample s;
      s.album_id = album.id;
      s.z = diverse_subset(album, model.story_len, rng);
      s.loglik = -sequence_nll(model.params, album, s.z);
      return s;
    }
  }
  throw Error(ErrorCode::internal, "best_story: unhandled mode");
}

// ---------------------------------------------------------------------------
// Exact marginal by enumeration, for small albums only. Sums
// exp(log P(x_z | z) + log P(z)) over every strictly increasing index subset
// via a prefix walk that reuses the recurrent state.

namespace detail {

inline double binomial_count(std::size_t t, std::size_t n) {
  double c = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    c *= static_cast<double>(t - i) / static_cast<double>(i + 1);
    if (c > 1e18) return c;
  }
  return c;
}

inline void marginal_walk(const SrnnModel& model, const Album& album, std::size_t story_len,
                          std::size_t last, std::size_t picks, const Vector& h,
                          double log_acc, Vector& terms) {
  if (picks == story_len) {
    terms.push_back(log_acc);
    return;
  }
  StepOutput s = forward_step(model.params, album.feature(last), h);
  const std::size_t begin = last + 1;
  const Vector logp = log_softmax(window_scores(s.y, album, begin, album.size()));
  const auto [lo, hi] = feasible_range(last, picks, story_len, album.size());
  const double log_window = -std::log(static_cast<double>(hi - lo + 1));
  for (std::size_t j = lo; j <= hi; ++j)
    marginal_walk(model, album, story_len, j, picks + 1, s.h,
                  log_acc + logp[j - begin] + log_window, terms);
}

}  // namespace detail

inline double marginal_loglik_bruteforce(const SrnnModel& model, const Album& album,
                                         std::size_t story_len = 0) {
  const std::size_t n = story_len == 0 ? model.story_len : story_len;
  const std::size_t t = album.size();
  require(n >= 2, ErrorCode::invalid_argument, "marginal: story length must be >= 2");
  require(t >= n, ErrorCode::album_too_short,
          "album '" + album.id + "' shorter than story length");
  require(detail::binomial_count(t, n) <= 1e5, ErrorCode::invalid_argument,
          "marginal: C(" + std::to_string(t) + ", " + std::to_string(n) +
              ") exceeds the enumeration bound");
  Vector terms;
  const double log_start = -std::log(static_cast<double>(t - n + 1));
  const Vector h0(model.params.hidden(), 0.0);
  for (std::size_t z1 = 0; z1 + n <= t; ++z1)
    detail::marginal_walk(model, album, n, z1, 1, h0, log_start, terms);
  return logsumexp(terms);
}

// ---------------------------------------------------------------------------
// Stochastic EM training. Each epoch shuffles the usable albums, draws one
// story per album (mode-dependent) and immediately takes one momentum SGD
// step on its exact gradients. After each epoch the validation score, the
// mean best-story log-likelihood on the validation set, drives a
// halve-on-plateau learning-rate schedule; training stops at max_epochs or
// once the rate falls below 1e-5.

struct EmTrainResult {
  SrnnModel model;
  TrainHistory history;
};

inline constexpr std::size_t kValidationSamples = 25;
inline constexpr double kMinLearningRate = 1e-5;

inline EmTrainResult train(SrnnModel model, const Dataset& train_ds, const Dataset& val_ds,
                           const TrainConfig& cfg, const RngStream& rng) {
  cfg.validate();
  require(model.params.dim() == train_ds.dim, ErrorCode::dimension_mismatch,
          "train: model dimension " + std::to_string(model.params.dim()) +
              " != dataset dimension " + std::to_string(train_ds.dim));
  require(model.story_len >= 2, ErrorCode::invalid_argument,
          "train: story length must be >= 2");

  const std::size_t n = model.story_len;
  std::vector<const Album*> usable;
  for (const Album& album : train_ds.albums) {
    if (album.size() >= n) {
      usable.push_back(&album);
    } else {
      std::fprintf(stderr, "warning: skipping album '%s' (%zu items < story length %zu)\n",
                   album.id.c_str(), album.size(), n);
    }
  }
  require(!usable.empty(), ErrorCode::album_too_short,
          "train: no album has at least " + std::to_string(n) + " items");

  // Diverse subsets are a property of the album, not the weights; fix them
  // once so every epoch optimizes the same stories.
  std::vector<StoryIndices> diverse_train;
  if (model.mode == StoryMode::diverse)
    for (std::size_t i = 0; i < usable.size(); ++i) {
      RngStream ds_rng = rng.substream(streams::kDiverse, i, 0);
      diverse_train.push_back(diverse_subset(*usable[i], n, ds_rng));
    }

  std::vector<const Album*> val_usable;
  for (const Album& album : val_ds.albums)
    if (album.size() >= n) val_usable.push_back(&album);
  std::vector<StoryIndices> diverse_val;
  if (model.mode == StoryMode::diverse)
    for (std::size_t v = 0; v < val_usable.size(); ++v) {
      RngStream ds_rng = rng.substream(streams::kDiverse, v, 1);
      diverse_val.push_back(diverse_subset(*val_usable[v], n, ds_rng));
    }

  require(model.params.hidden() == cfg.hidden, ErrorCode::dimension_mismatch,
          "train: model hidden size does not match config");
  MomentumState momentum(model.params.dim(), cfg.hidden);

  TrainHistory history;
  double lr = cfg.learning_rate;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;

  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.max_epochs && lr >= kMinLearningRate; ++epoch) {
    RngStream shuffle_rng = rng.substream(streams::kShuffle, epoch);
    shuffle_rng.shuffle(order);

    TrainConfig step_cfg = cfg;
    step_cfg.learning_rate = lr;
    double nll_sum = 0.0;
    for (std::size_t idx : order) {
      const Album& album = *usable[idx];
      StoryIndices z;
      switch (model.mode) {
        case StoryMode::skip: {
          RngStream estep_rng = rng.substream(streams::kEstep, epoch, idx);
          z = estep_sample_z(model, album, estep_rng);
          break;
        }
        case StoryMode::noskip:
          z = StoryIndices::prefix(n, album.size());
          break;
        case StoryMode::diverse:
          z = diverse_train[idx];
          break;
      }
      NllAndGrads step = nll_and_grads(model.params, album, z);
      sgd_update(model.params, step.grads, step_cfg, momentum);
      nll_sum += step.nll;
    }
    const double mean_nll = nll_sum / static_cast<double>(usable.size());

    double val_score = std::numeric_limits<double>::quiet_NaN();
    if (!val_usable.empty()) {
      double sum = 0.0;
      for (std::size_t v = 0; v < val_usable.size(); ++v) {
        const Album& album = *val_usable[v];
        switch (model.mode) {
          case StoryMode::skip: {
            RngStream val_rng = rng.substream(streams::kValidation, epoch, v);
            sum += sample_storylines(model, album, kValidationSamples, val_rng).loglik;
            break;
          }
          case StoryMode::noskip:
            sum -= sequence_nll(model.params, album,
                                StoryIndices::prefix(n, album.size()));
            break;
          case StoryMode::diverse:
            sum -= sequence_nll(model.params, album, diverse_val[v]);
            break;
        }
      }
      val_score = sum / static_cast<double>(val_usable.size());
    }
    history.push_back({mean_nll, val_score, lr});

    // Plateau schedule; with no usable validation albums the training loss
    // stands in so the schedule still functions.
    const double schedule_score = std::isnan(val_score) ? -mean_nll : val_score;
    if (schedule_score > best_score) {
      best_score = schedule_score;
      epochs_since_improvement = 0;
    } else if (++epochs_since_improvement >= cfg.plateau_patience) {
      lr *= cfg.lr_decay_factor;
      epochs_since_improvement = 0;
    }
  }

  return {std::move(model), std::move(history)};
}

// Fresh model with seeded uniform weights; the same (config, dim, story
// settings) always yields the same model.
inline SrnnModel make_initial_model(std::size_t dim, const TrainConfig& cfg,
                                    std::size_t story_len, StoryMode mode,
                                    const std::string& concept_tag) {
  cfg.validate();
  RngStream root(cfg.seed);
  RngStream init_rng = root.substream(streams::kInit);
  SrnnModel model;
  model.params = init_params(dim, cfg.hidden, init_rng);
  model.story_len = story_len;
  model.mode = mode;
  model.concept_name = concept_tag;
  return model;
}

// ---------------------------------------------------------------------------
// Model files.

struct LoadedModel {
  SrnnModel model;
  TrainConfig config;
  TrainHistory history;
};

inline void save_model(const SrnnModel& model, const TrainConfig& cfg,
                       const TrainHistory& history, const std::string& path) {
  require(model.params.dim() > 0 && model.params.hidden() > 0, ErrorCode::invalid_argument,
          "save_model: uninitialized parameters");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + path + " for writing");
  out.write("SRNM", 4);
  detail::write_u32(out, kModelFileVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(model.params.dim()));
  detail::write_u32(out, static_cast<std::uint32_t>(model.params.hidden()));
  for (const Matrix* m : {&model.params.w_in, &model.params.w_out, &model.params.w_rec})
    for (double v : m->data()) detail::write_f64(out, v);
  const json trailer = {{"concept", model.concept_name},
                        {"mode", to_string(model.mode)},
                        {"story_len", model.story_len},
                        {"config", cfg},
                        {"history", history}};
  out << trailer.dump();
  require(out.good(), ErrorCode::io, "write failed for " + path);
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open model file " + path);
  char magic[4] = {};
  in.read(magic, 4);
  require(in.gcount() == 4 && std::string(magic, 4) == "SRNM", ErrorCode::corrupt_format,
          path + ": bad magic, not a model file");
  const std::uint32_t version = detail::read_u32(in, path + " header");
  require(version == kModelFileVersion, ErrorCode::corrupt_format,
          path + ": unsupported model file version " + std::to_string(version));
  const std::uint32_t dim = detail::read_u32(in, path + " header");
  const std::uint32_t hidden = detail::read_u32(in, path + " header");
  require(dim > 0 && hidden > 0, ErrorCode::corrupt_format, path + ": zero dimensions");

  LoadedModel out;
  out.model.params = RnnParams(dim, hidden);
  for (Matrix* m : {&out.model.params.w_in, &out.model.params.w_out, &out.model.params.w_rec})
    for (double& v : m->data()) {
      v = detail::read_f64(in, path + " weights");
      require(std::isfinite(v), ErrorCode::corrupt_format, path + ": non-finite weight");
    }

  std::string trailer_text((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  require(!trailer_text.empty(), ErrorCode::corrupt_format, path + ": missing trailer");
  const json trailer = json::parse(trailer_text, nullptr, false);
  require(!trailer.is_discarded(), ErrorCode::corrupt_format, path + ": invalid trailer JSON");
  try {
    out.model.concept_name = trailer.at("concept").get<std::string>();
    out.model.mode = story_mode_from_string(trailer.at("mode").get<std::string>());
    out.model.story_len = trailer.at("story_len").get<std::size_t>();
    out.config = trailer.at("config").get<TrainConfig>();
    out.history = trailer.at("history").get<TrainHistory>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_format, path + ": trailer missing fields: " + e.what());
  }
  require(out.model.story_len >= 2, ErrorCode::corrupt_format,
          path + ": story_len must be >= 2");
  return out;
}

inline void to_json(json& j, const StorySample& s) {
  std::vector<std::size_t> one_based;
  one_based.reserve(s.z.size());
  for (std::size_t i = 0; i < s.z.size(); ++i) one_based.push_back(s.z[i] + 1);
  j = json{{"album", s.album_id}, {"indices", one_based}, {"loglik", s.loglik}};
}

}  // namespace srnn

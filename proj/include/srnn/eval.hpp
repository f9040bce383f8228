#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srnn/baselines.hpp"
#include "srnn/data.hpp"
#include "srnn/error.hpp"
#include "srnn/rng.hpp"
#include "srnn/srnn.hpp"

namespace srnn::eval {

enum class Horizon { long_term, short_term };

inline const char* to_string(Horizon h) {
  return h == Horizon::long_term ? "long" : "short";
}

inline Horizon horizon_from_string(const std::string& s) {
  if (s == "long") return Horizon::long_term;
  if (s == "short") return Horizon::short_term;
  throw Error(ErrorCode::config, "unknown horizon '" + s + "' (expected long or short)");
}

// One five-way forced-choice question: given one image, pick its true
// successor among four distractors from the same album. Long-term pairs are
// consecutive ground-truth summary entries, short-term pairs are consecutive
// album images. All indices are album positions.
struct PredictionInstance {
  std::size_t album_index = 0;
  std::string album_id;
  std::size_t given = 0;
  std::size_t truth = 0;
  std::vector<std::size_t> candidates;  // 5 entries, shuffled, contains truth
  Horizon horizon = Horizon::short_term;
};

inline constexpr std::size_t kNumCandidates = 5;

namespace detail {

inline std::vector<std::size_t> draw_distractors(const Album& album, std::size_t given,
                                                 std::size_t truth, RngStream& rng) {
  std::vector<std::size_t> pool;
  pool.reserve(album.size() - 2);
  for (std::size_t i = 0; i < album.size(); ++i)
    if (i != given && i != truth) pool.push_back(i);
  for (std::size_t i = 0; i < kNumCandidates - 1; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(kNumCandidates - 1);
  return pool;
}

}  // namespace detail

// Builds every realizable instance for the horizon. Albums with fewer than
// six items cannot host four distractors and are skipped with a note, as are
// degenerate truth pairs.
inline std::vector<PredictionInstance> build_prediction_set(const Dataset& ds,
                                                            const PlantedTruth& truth,
                                                            Horizon horizon,
                                                            const RngStream& rng) {
  std::vector<PredictionInstance> instances;
  for (std::size_t a = 0; a < ds.albums.size(); ++a) {
    const Album& album = ds.albums[a];
    if (album.size() < kNumCandidates + 1) {
      std::fprintf(stderr, "warning: album '%s' too small for prediction instances (%zu items)\n",
                   album.id.c_str(), album.size());
      continue;
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (horizon == Horizon::short_term) {
      for (std::size_t t = 0; t + 1 < album.size(); ++t) pairs.emplace_back(t, t + 1);
    } else {
      const auto it = truth.albums.find(album.id);
      if (it == truth.albums.end()) {
        std::fprintf(stderr, "warning: album '%s' has no ground truth, skipped\n",
                     album.id.c_str());
        continue;
      }
      const std::vector<std::size_t>& summary = it->second.summary;
      for (std::size_t s = 0; s + 1 < summary.size(); ++s) {
        require(summary[s] < album.size() && summary[s + 1] < album.size(),
                ErrorCode::corrupt_format,
                "album '" + album.id + "': summary index out of range");
        if (summary[s] == summary[s + 1]) {
          std::fprintf(stderr, "warning: album '%s' has a degenerate summary pair, skipped\n",
                       album.id.c_str());
          continue;
        }
        pairs.emplace_back(summary[s], summary[s + 1]);
      }
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [given, next] = pairs[p];
      RngStream inst_rng =
          rng.substream(streams::kEval, a, (p << 1) | (horizon == Horizon::long_term ? 1 : 0));
      PredictionInstance inst;
      inst.album_index = a;
      inst.album_id = album.id;
      inst.given = given;
      inst.truth = next;
      inst.horizon = horizon;
      inst.candidates = detail::draw_distractors(album, given, next, inst_rng);
      inst.candidates.push_back(next);
      inst_rng.shuffle(inst.candidates);
      instances.push_back(std::move(inst));
    }
  }
  return instances;
}

using Predictor = std::function<std::size_t(const Album&, const PredictionInstance&)>;

namespace detail {

// Shared argbest over candidates: highest (or lowest) score wins, exact ties
// go to the smallest album index.
template <class Score>
std::size_t pick_candidate(const PredictionInstance& inst, bool maximize, Score&& score) {
  std::size_t best = inst.candidates.front();
  double best_s = score(best);
  for (std::size_t i = 1; i < inst.candidates.size(); ++i) {
    const std::size_t c = inst.candidates[i];
    const double s = score(c);
    const bool better = maximize ? (s > best_s) : (s < best_s);
    if (better || (s == best_s && c < best)) {
      best_s = s;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

// One recurrent step from the zero state on the given image, then the
// softmax score of each candidate under the readout.
inline Predictor srnn_predictor(const SrnnModel& model) {
  return [params = model.params](const Album& album, const PredictionInstance& inst) {
    const StepOutput s = forward_step(params, album.feature(inst.given), Vector(params.hidden(), 0.0));
    std::vector<Vector> features;
    features.reserve(inst.candidates.size());
    for (std::size_t c : inst.candidates) features.push_back(album.feature(c));
    const Vector probs = score_future(s.y, features);
    std::size_t best_pos = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      const bool better = probs[i] > probs[best_pos] ||
                          (probs[i] == probs[best_pos] &&
                           inst.candidates[i] < inst.candidates[best_pos]);
      if (better) best_pos = i;
    }
    return inst.candidates[best_pos];
  };
}

inline Predictor nn_predictor() {
  return [](const Album& album, const PredictionInstance& inst) {
    return detail::pick_candidate(inst, true, [&](std::size_t c) {
      return cosine_similarity(album.feature(inst.given), album.feature(c));
    });
  };
}

inline Predictor fi_predictor() {
  return [](const Album& album, const PredictionInstance& inst) {
    return detail::pick_candidate(inst, false, [&](std::size_t c) {
      return cosine_similarity(album.feature(inst.given), album.feature(c));
    });
  };
}

// Uniform over the five candidates, deterministic per instance so the
// accuracy does not depend on evaluation order.
inline Predictor random_predictor(std::uint64_t seed) {
  return [root = RngStream(seed)](const Album&, const PredictionInstance& inst) {
    RngStream rng = root.substream(inst.album_index, inst.given,
                                   inst.horizon == Horizon::long_term ? 1 : 0);
    return inst.candidates[rng.next_below(inst.candidates.size())];
  };
}

struct EvalReport {
  std::string method;
  std::string task;
  std::map<std::string, double> metrics;
  std::size_t count = 0;
};

inline void to_json(json& j, const EvalReport& r) {
  j = json{{"method", r.method}, {"task", r.task}, {"metrics", r.metrics}, {"count", r.count}};
}

inline EvalReport eval_prediction(const std::string& method, const Predictor& predictor,
                                  const Dataset& ds,
                                  const std::vector<PredictionInstance>& instances) {
  require(!instances.empty(), ErrorCode::invalid_argument,
          "eval_prediction: no instances");
  std::size_t correct = 0;
  for (const PredictionInstance& inst : instances) {
    require(inst.album_index < ds.albums.size(), ErrorCode::invalid_argument,
            "eval_prediction: instance references a missing album");
    if (predictor(ds.albums[inst.album_index], inst) == inst.truth) ++correct;
  }
  EvalReport report;
  report.method = method;
  report.task = std::string("prediction/") + to_string(instances.front().horizon);
  report.count = instances.size();
  report.metrics["accuracy"] =
      static_cast<double>(correct) / static_cast<double>(instances.size());
  return report;
}

// ---------------------------------------------------------------------------
// Storyline recovery against planted state labels.

struct RecoveryMetrics {
  double coverage = 0.0;        // distinct planted states visited / num_states
  double order_accuracy = 0.0;  // state pairs in planted order / all state pairs
  std::size_t distinct_states = 0;
};

inline RecoveryMetrics eval_storyline_recovery(const StorySample& sample,
                                               const AlbumTruth& truth,
                                               std::size_t num_states) {
  require(num_states >= 1, ErrorCode::invalid_argument,
          "eval_storyline_recovery: num_states must be >= 1");
  // First occurrence order of the distinct planted states along the story;
  // distractors (label 0) contribute nothing.
  std::vector<int> first_seen;
  for (std::size_t i = 0; i < sample.z.size(); ++i) {
    const std::size_t idx = sample.z[i];
    require(idx < truth.labels.size(), ErrorCode::invalid_argument,
            "eval_storyline_recovery: story index outside the labeled album");
    const int label = truth.labels[idx];
    if (label > 0 && std::find(first_seen.begin(), first_seen.end(), label) == first_seen.end())
      first_seen.push_back(label);
  }
  RecoveryMetrics m;
  m.distinct_states = first_seen.size();
  m.coverage = static_cast<double>(first_seen.size()) / static_cast<double>(num_states);
  std::size_t pairs = 0, correct = 0;
  for (std::size_t i = 0; i < first_seen.size(); ++i)
    for (std::size_t j = i + 1; j < first_seen.size(); ++j) {
      ++pairs;
      if (first_seen[i] < first_seen[j]) ++correct;
    }
  // A story visiting at most one state has no pairs to get wrong.
  m.order_accuracy = pairs == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(pairs);
  return m;
}

inline EvalReport summarize_recovery(const std::string& method,
                                     const std::vector<RecoveryMetrics>& per_album) {
  require(!per_album.empty(), ErrorCode::invalid_argument, "summarize_recovery: no albums");
  EvalReport report;
  report.method = method;
  report.task = "storyline";
  report.count = per_album.size();
  double cov = 0.0, ord = 0.0;
  for (const RecoveryMetrics& m : per_album) {
    cov += m.coverage;
    ord += m.order_accuracy;
  }
  report.metrics["coverage"] = cov / static_cast<double>(per_album.size());
  report.metrics["order_accuracy"] = ord / static_cast<double>(per_album.size());
  return report;
}

// ---------------------------------------------------------------------------
// Transition graph over selected images: node per image (top max_nodes by
// selection frequency), directed edge weights count story adjacencies.

struct GraphExportStats {
  std::size_t nodes_emitted = 0;
  std::size_t edges_emitted = 0;
  std::uint64_t total_transitions = 0;  // before node truncation
};

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline GraphExportStats export_transition_graph(const std::vector<StorySample>& stories,
                                                const Dataset& ds, std::ostream& out,
                                                std::size_t max_nodes = 10) {
  require(max_nodes >= 1, ErrorCode::invalid_argument,
          "export_transition_graph: max_nodes must be >= 1");
  std::map<std::string, const Album*> by_id;
  for (const Album& album : ds.albums) by_id[album.id] = &album;

  std::map<std::string, std::uint64_t> node_freq;
  std::map<std::pair<std::string, std::string>, std::uint64_t> edges;
  GraphExportStats stats;
  for (const StorySample& story : stories) {
    const auto it = by_id.find(story.album_id);
    require(it != by_id.end(), ErrorCode::invalid_argument,
            "export_transition_graph: story references unknown album '" + story.album_id + "'");
    const Album& album = *it->second;
    require(story.z.back() < album.size(), ErrorCode::invalid_argument,
            "export_transition_graph: story index outside album '" + story.album_id + "'");
    for (std::size_t i = 0; i < story.z.size(); ++i) {
      const std::string& id = album.items[story.z[i]].image_id;
      ++node_freq[id];
      if (i + 1 < story.z.size()) {
        const std::string& next = album.items[story.z[i + 1]].image_id;
        ++edges[{id, next}];
        ++stats.total_transitions;
      }
    }
  }
  // Every story of length n contributes exactly n-1 transitions.
  std::uint64_t edge_sum = 0;
  for (const auto& [key, w] : edges) edge_sum += w;
  require(edge_sum == stats.total_transitions, ErrorCode::internal,
          "export_transition_graph: edge weights do not add up");

  std::vector<std::pair<std::string, std::uint64_t>> ranked(node_freq.begin(), node_freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_nodes) ranked.resize(max_nodes);
  std::set<std::string> kept;
  for (const auto& [id, freq] : ranked) kept.insert(id);

  out << "digraph storylines {\n";
  out << "  rankdir=LR;\n";
  out << "  node [shape=box];\n";
  for (const auto& [id, freq] : ranked) {
    out << "  \"" << detail::dot_escape(id) << "\" [label=\"" << detail::dot_escape(id)
        << "\", picks=" << freq << "];\n";
    ++stats.nodes_emitted;
  }
  for (const auto& [key, weight] : edges) {
    if (!kept.count(key.first) || !kept.count(key.second)) continue;
    out << "  \"" << detail::dot_escape(key.first) << "\" -> \""
        << detail::dot_escape(key.second) << "\" [label=\"" << weight
        << "\", weight=" << weight << "];\n";
    ++stats.edges_emitted;
  }
  out << "}\n";
  return stats;
}

// ---------------------------------------------------------------------------
// Story-length sweep: trains one model per requested length on the same data
// with the same seed and evaluates both prediction horizons on shared
// instance sets.

struct SweepRow {
  std::size_t story_len = 0;
  double long_accuracy = 0.0;
  std::size_t long_count = 0;
  double short_accuracy = 0.0;
  std::size_t short_count = 0;
  double final_val_score = 0.0;
};

inline void to_json(json& j, const SweepRow& r) {
  j = json{{"story_len", r.story_len},
           {"long_accuracy", r.long_accuracy},
           {"long_count", r.long_count},
           {"short_accuracy", r.short_accuracy},
           {"short_count", r.short_count},
           {"final_val_score", r.final_val_score}};
}

inline std::vector<SweepRow> n_sweep(const Dataset& train_ds, const Dataset& eval_ds,
                                     const PlantedTruth& truth,
                                     const std::vector<std::size_t>& story_lens,
                                     const TrainConfig& cfg, StoryMode mode) {
  require(!story_lens.empty(), ErrorCode::invalid_argument, "n_sweep: no story lengths");
  const RngStream root(cfg.seed);
  const auto long_set = build_prediction_set(eval_ds, truth, Horizon::long_term, root);
  const auto short_set = build_prediction_set(eval_ds, truth, Horizon::short_term, root);

  std::vector<SweepRow> rows;
  for (std::size_t n : story_lens) {
    require(n >= 2, ErrorCode::invalid_argument, "n_sweep: story lengths must be >= 2");
    SrnnModel model = make_initial_model(train_ds.dim, cfg, n, mode, train_ds.concept_name);
    EmTrainResult result = train(std::move(model), train_ds, eval_ds, cfg, root.substream(streams::kSweep, n));
    SweepRow row;
    row.story_len = n;
    const Predictor predictor = srnn_predictor(result.model);
    if (!long_set.empty()) {
      const EvalReport r = eval_prediction("srnn", predictor, eval_ds, long_set);
      row.long_accuracy = r.metrics.at("accuracy");
      row.long_count = r.count;
    }
    if (!short_set.empty()) {
      const EvalReport r = eval_prediction("srnn", predictor, eval_ds, short_set);
      row.short_accuracy = r.metrics.at("accuracy");
      row.short_count = r.count;
    }
    row.final_val_score = result.history.empty()
                              ? std::numeric_limits<double>::quiet_NaN()
                              : result.history.back().val_score;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Plain-text table rendering for reports.

inline std::string render_table(const std::vector<EvalReport>& reports) {
  require(!reports.empty(), ErrorCode::invalid_argument, "render_table: no reports");
  std::vector<std::string> metric_names;
  for (const EvalReport& r : reports)
    for (const auto& [name, value] : r.metrics)
      if (std::find(metric_names.begin(), metric_names.end(), name) == metric_names.end())
        metric_names.push_back(name);
  std::sort(metric_names.begin(), metric_names.end());

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"method", "task", "count"};
  header.insert(header.end(), metric_names.begin(), metric_names.end());
  cells.push_back(header);
  for (const EvalReport& r : reports) {
    std::vector<std::string> row = {r.method, r.task, std::to_string(r.count)};
    for (const std::string& name : metric_names) {
      const auto it = r.metrics.find(name);
      if (it == r.metrics.end()) {
        row.push_back("-");
      } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", it->second);
        row.push_back(buf);
      }
    }
    cells.push_back(std::move(row));
  }

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c] << std::string(widths[c] - row[c].size(), ' ');
      out << (c + 1 < row.size() ? "  " : "");
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace srnn::eval

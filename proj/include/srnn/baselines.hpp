#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "srnn/data.hpp"
#include "srnn/error.hpp"
#include "srnn/linalg.hpp"
#include "srnn/rng.hpp"
#include "srnn/rnn.hpp"

namespace srnn::baselines {

// k distinct indices from pool, uniform over subsets, returned ascending.
inline std::vector<std::size_t> sample_uniform(const std::vector<std::size_t>& pool,
                                               std::size_t k, RngStream& rng) {
  require(k >= 1 && k <= pool.size(), ErrorCode::invalid_argument,
          "sample_uniform: need 1 <= k <= pool size");
  std::vector<std::size_t> items = pool;
  // Partial Fisher-Yates: after i swaps the first i entries are a uniform
  // draw without replacement.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  std::sort(items.begin(), items.end());
  return items;
}

// k-means++ seeding. Returns the chosen point indices in draw order.
inline std::vector<std::size_t> kmeanspp_indices(const std::vector<Vector>& points,
                                                 std::size_t k, RngStream& rng) {
  require(k >= 1 && k <= points.size(), ErrorCode::invalid_argument,
          "kmeanspp: need 1 <= k <= point count");
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  std::vector<bool> is_chosen(points.size(), false);
  const std::size_t first = static_cast<std::size_t>(rng.next_below(points.size()));
  chosen.push_back(first);
  is_chosen[first] = true;

  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    d2[i] = squared_distance(points[i], points[first]);

  while (chosen.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = points.size();
    if (total > 0.0) {
      const double u = rng.next_unit() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        if (u < cum) {
          pick = i;
          break;
        }
      }
      if (pick == points.size()) {
        // Rounding pushed u past the last positive cell; take that cell.
        for (std::size_t i = points.size(); i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
      }
    }
    if (pick == points.size()) {
      // Every remaining point coincides with a chosen center; fall back to a
      // uniform draw among the unchosen.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < points.size(); ++i)
        if (!is_chosen[i]) rest.push_back(i);
      pick = rest[static_cast<std::size_t>(rng.next_below(rest.size()))];
    }
    chosen.push_back(pick);
    is_chosen[pick] = true;
    for (std::size_t i = 0; i < points.size(); ++i)
      d2[i] = std::min(d2[i], squared_distance(points[i], points[pick]));
  }
  return chosen;
}

struct KMeansModel {
  std::vector<Vector> centers;
  std::vector<double> distortion_trace;  // distortion after every assignment pass

  std::size_t k() const noexcept { return centers.size(); }
};

namespace detail {

// Nearest center by squared distance, ties to the lowest center index.
inline std::size_t nearest_center(const std::vector<Vector>& centers, const Vector& x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = squared_distance(centers[c], x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

// Lloyd iterations from a k-means++ seed; runs until assignments stop
// changing or max_iters passes. Empty clusters are re-seeded with the point
// farthest from its current center. Distortion after each assignment pass is
// recorded and checked non-increasing.
inline KMeansModel kmeans_fit(const std::vector<Vector>& points, std::size_t k,
                              RngStream& rng, std::size_t max_iters = 100) {
  require(!points.empty(), ErrorCode::invalid_argument, "kmeans_fit: no points");
  require(k >= 1 && k <= points.size(), ErrorCode::invalid_argument,
          "kmeans_fit: need 1 <= k <= point count");
  const std::size_t dim = points.front().size();
  for (const Vector& p : points)
    require(p.size() == dim, ErrorCode::dimension_mismatch,
            "kmeans_fit: points disagree on dimension");

  KMeansModel model;
  for (std::size_t idx : kmeanspp_indices(points, k, rng)) model.centers.push_back(points[idx]);

  std::vector<std::size_t> assign(points.size());
  std::vector<std::size_t> prev_assign;
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    double distortion = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      assign[i] = detail::nearest_center(model.centers, points[i]);
      distortion += squared_distance(points[i], model.centers[assign[i]]);
    }
    if (!model.distortion_trace.empty()) {
      const double prev = model.distortion_trace.back();
      require(distortion <= prev + 1e-9 * std::max(1.0, std::abs(prev)), ErrorCode::internal,
              "kmeans_fit: distortion increased");
    }
    model.distortion_trace.push_back(distortion);
    if (assign == prev_assign) break;
    prev_assign = assign;

    std::vector<Vector> sums(k, Vector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += points[i][d];
      ++counts[assign[i]];
    }
    std::vector<double> dist_to_own(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
      dist_to_own[i] = squared_distance(points[i], model.centers[assign[i]]);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < dim; ++d)
          model.centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      } else {
        // Re-seed at the point currently worst served, then exclude it so a
        // second empty cluster takes the next worst.
        std::size_t far = 0;
        for (std::size_t i = 1; i < points.size(); ++i)
          if (dist_to_own[i] > dist_to_own[far]) far = i;
        model.centers[c] = points[far];
        dist_to_own[far] = -1.0;
      }
    }
  }
  return model;
}

// One pool index per center (nearest member, ties to the lowest index),
// deduplicated and sorted ascending.
inline std::vector<std::size_t> kmeans_select(const KMeansModel& model,
                                              const std::vector<Vector>& pool) {
  require(!pool.empty(), ErrorCode::invalid_argument, "kmeans_select: empty pool");
  require(!model.centers.empty(), ErrorCode::invalid_argument, "kmeans_select: empty model");
  std::vector<std::size_t> picks;
  for (const Vector& center : model.centers) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double d = squared_distance(center, pool[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    picks.push_back(best);
  }
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  return picks;
}

inline void to_json(json& j, const KMeansModel& m) {
  j = json{{"centers", m.centers}, {"distortion_trace", m.distortion_trace}};
}

inline void from_json(const json& j, KMeansModel& m) {
  j.at("centers").get_to(m.centers);
  if (j.contains("distortion_trace")) j.at("distortion_trace").get_to(m.distortion_trace);
  const std::size_t dim = m.centers.empty() ? 0 : m.centers.front().size();
  for (const Vector& c : m.centers)
    require(c.size() == dim && dim > 0, ErrorCode::corrupt_format,
            "kmeans model: centers disagree on dimension");
}

// Candidate most similar to the query by cosine; ties to the lowest index.
inline std::size_t nn_predict(const Vector& query, const std::vector<Vector>& candidates) {
  require(!candidates.empty(), ErrorCode::invalid_argument, "nn_predict: no candidates");
  std::size_t best = 0;
  double best_s = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = cosine_similarity(query, candidates[i]);
    if (s > best_s) {
      best_s = s;
      best = i;
    }
  }
  return best;
}

// Candidate least similar to the query by cosine; ties to the lowest index.
inline std::size_t fi_predict(const Vector& query, const std::vector<Vector>& candidates) {
  require(!candidates.empty(), ErrorCode::invalid_argument, "fi_predict: no candidates");
  std::size_t best = 0;
  double best_s = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = cosine_similarity(query, candidates[i]);
    if (s < best_s) {
      best_s = s;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Cluster-sequence baseline: quantize every image to its nearest center,
// then train the same Elman core on one-hot center ids with a softmax over
// the K ids as the per-step loss.

struct ClusterRnnModel {
  KMeansModel kmeans;
  RnnParams params;  // dim = k() one-hot in, k() scores out
};

inline std::vector<std::size_t> quantize(const KMeansModel& model, const Album& album) {
  std::vector<std::size_t> ids(album.size());
  for (std::size_t i = 0; i < album.size(); ++i)
    ids[i] = detail::nearest_center(model.centers, album.feature(i));
  return ids;
}

namespace detail {

inline Vector one_hot(std::size_t k, std::size_t id) {
  Vector v(k, 0.0);
  v[id] = 1.0;
  return v;
}

struct ClusterSequenceLoss {
  double nll = 0.0;
  RnnGradients grads;
};

// Cross-entropy over next center id, full-unroll gradients.
inline ClusterSequenceLoss cluster_sequence_loss(const RnnParams& p,
                                                 const std::vector<std::size_t>& ids) {
  const std::size_t steps = ids.size() - 1;
  const std::size_t k = p.dim();
  std::vector<Vector> hot(steps);
  std::vector<const Vector*> inputs(steps);
  for (std::size_t n = 0; n < steps; ++n) {
    hot[n] = one_hot(k, ids[n]);
    inputs[n] = &hot[n];
  }
  const srnn::detail::ForwardTape tape = srnn::detail::forward_sequence(p, inputs);
  ClusterSequenceLoss out;
  std::vector<Vector> dys(steps);
  for (std::size_t n = 0; n < steps; ++n) {
    const Vector logp = log_softmax(tape.ys[n]);
    out.nll -= logp[ids[n + 1]];
    Vector dy(k);
    for (std::size_t j = 0; j < k; ++j)
      dy[j] = std::exp(logp[j]) - (j == ids[n + 1] ? 1.0 : 0.0);
    dys[n] = std::move(dy);
  }
  out.grads = srnn::detail::backprop_sequence(p, inputs, tape, dys);
  return out;
}

}  // namespace detail

// Per-step log-loss of the quantized dataset under the model; exp of the
// mean is the per-step perplexity.
inline double cluster_rnn_mean_nll(const ClusterRnnModel& model, const Dataset& ds) {
  double total = 0.0;
  std::size_t steps = 0;
  for (const Album& album : ds.albums) {
    if (album.size() < 2) continue;
    const std::vector<std::size_t> ids = quantize(model.kmeans, album);
    total += detail::cluster_sequence_loss(model.params, ids).nll;
    steps += ids.size() - 1;
  }
  require(steps > 0, ErrorCode::invalid_argument,
          "cluster_rnn_mean_nll: no album has two items");
  return total / static_cast<double>(steps);
}

// Fit centers on the pooled features, then SGD epochs over full album
// sequences in seeded shuffled order.
inline ClusterRnnModel cluster_rnn_train(const Dataset& train, std::size_t k,
                                         const TrainConfig& cfg, RngStream& rng) {
  cfg.validate();
  require(!train.albums.empty(), ErrorCode::invalid_argument, "cluster_rnn_train: no albums");
  std::vector<Vector> pooled;
  for (const Album& album : train.albums)
    for (const AlbumItem& item : album.items) pooled.push_back(item.feature);
  require(k <= pooled.size(), ErrorCode::invalid_argument,
          "cluster_rnn_train: more centers than images");

  ClusterRnnModel model;
  RngStream fit_rng = rng.substream(streams::kBaseline, 1);
  model.kmeans = kmeans_fit(pooled, k, fit_rng);
  RngStream init_rng = rng.substream(streams::kInit);
  model.params = init_params(k, cfg.hidden, init_rng);

  std::vector<std::vector<std::size_t>> sequences;
  for (const Album& album : train.albums) {
    if (album.size() < 2) continue;
    sequences.push_back(quantize(model.kmeans, album));
  }
  require(!sequences.empty(), ErrorCode::invalid_argument,
          "cluster_rnn_train: no album has two items");

  MomentumState momentum(k, cfg.hidden);
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    RngStream shuffle_rng = rng.substream(streams::kShuffle, epoch);
    shuffle_rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto loss = detail::cluster_sequence_loss(model.params, sequences[idx]);
      sgd_update(model.params, loss.grads, cfg, momentum);
    }
  }
  return model;
}

// Summarize an album by sampling a center sequence without replacement and
// mapping each sampled center to its nearest unused album image. A center
// with no unused image in its cluster is resampled a bounded number of
// times; after that the nearest unused image to the sampled center is taken
// regardless of cluster. Returns ascending album indices.
inline std::vector<std::size_t> cluster_rnn_select(const ClusterRnnModel& model,
                                                   const Album& album, std::size_t k,
                                                   RngStream& rng) {
  const std::size_t num_centers = model.kmeans.k();
  require(k >= 1 && k <= album.size(), ErrorCode::invalid_argument,
          "cluster_rnn_select: need 1 <= k <= album size");
  require(k <= num_centers, ErrorCode::invalid_argument,
          "cluster_rnn_select: more picks than centers");
  const std::vector<std::size_t> ids = quantize(model.kmeans, album);

  std::vector<bool> image_used(album.size(), false);
  std::vector<bool> center_used(num_centers, false);
  auto nearest_unused = [&](const Vector& center, bool restrict_cluster,
                            std::size_t cluster) -> std::size_t {
    std::size_t best = album.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < album.size(); ++i) {
      if (image_used[i]) continue;
      if (restrict_cluster && ids[i] != cluster) continue;
      const double d = squared_distance(center, album.feature(i));
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };

  std::vector<std::size_t> picks;
  Vector h(model.params.hidden(), 0.0);
  Vector input(num_centers, 0.0);
  constexpr std::size_t kMaxRetries = 8;
  for (std::size_t step = 0; step < k; ++step) {
    const StepOutput s = forward_step(model.params, input, h);
    Vector probs = stable_softmax(s.y);
    for (std::size_t c = 0; c < num_centers; ++c)
      if (center_used[c]) probs[c] = 0.0;
    double mass = 0.0;
    for (double p : probs) mass += p;
    if (mass <= 0.0) {
      std::size_t free_count = 0;
      for (std::size_t c = 0; c < num_centers; ++c)
        if (!center_used[c]) ++free_count;
      for (std::size_t c = 0; c < num_centers; ++c)
        probs[c] = center_used[c] ? 0.0 : 1.0 / static_cast<double>(free_count);
    } else {
      for (double& p : probs) p /= mass;
    }

    std::size_t center = num_centers;
    std::size_t image = album.size();
    for (std::size_t attempt = 0; attempt < kMaxRetries; ++attempt) {
      center = sample_categorical(probs, rng);
      image = nearest_unused(model.kmeans.centers[center], true, center);
      if (image < album.size()) break;
    }
    if (image == album.size())
      image = nearest_unused(model.kmeans.centers[center], false, 0);
    require(image < album.size(), ErrorCode::internal,
            "cluster_rnn_select: ran out of images");

    picks.push_back(image);
    image_used[image] = true;
    center_used[center] = true;
    h = s.h;
    input.assign(num_centers, 0.0);
    input[center] = 1.0;
  }
  std::sort(picks.begin(), picks.end());
  return picks;
}

}  // namespace srnn::baselines

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "srnn/data.hpp"
#include "srnn/error.hpp"
#include "srnn/linalg.hpp"
#include "srnn/rng.hpp"
#include "srnn/story.hpp"

namespace srnn {

// Elman network with sigmoid hidden units and a linear readout:
//   h_t = sigmoid(W_in x_t + W_rec h_{t-1}),  y_t = W_out h_t,  h_0 = 0.
// No bias terms. Matrix order everywhere (flatten, files) is W_in, W_out,
// W_rec.
struct RnnParams {
  Matrix w_in;   // hidden x dim
  Matrix w_out;  // dim x hidden
  Matrix w_rec;  // hidden x hidden

  RnnParams() = default;
  RnnParams(std::size_t dim, std::size_t hidden)
      : w_in(hidden, dim), w_out(dim, hidden), w_rec(hidden, hidden) {}

  std::size_t dim() const { return w_in.cols(); }
  std::size_t hidden() const { return w_in.rows(); }

  std::size_t param_count() const {
    return w_in.data().size() + w_out.data().size() + w_rec.data().size();
  }

  Vector flatten() const {
    Vector flat;
    flat.reserve(param_count());
    for (const Matrix* m : {&w_in, &w_out, &w_rec})
      flat.insert(flat.end(), m->data().begin(), m->data().end());
    return flat;
  }

  static RnnParams unflatten(const Vector& flat, std::size_t dim, std::size_t hidden) {
    RnnParams p(dim, hidden);
    require(flat.size() == p.param_count(), ErrorCode::dimension_mismatch,
            "unflatten: expected " + std::to_string(p.param_count()) + " values, got " +
                std::to_string(flat.size()));
    auto it = flat.begin();
    for (Matrix* m : {&p.w_in, &p.w_out, &p.w_rec}) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(m->data().size()), m->data().begin());
      it += static_cast<std::ptrdiff_t>(m->data().size());
    }
    return p;
  }

  friend bool operator==(const RnnParams& a, const RnnParams& b) {
    return a.w_in == b.w_in && a.w_out == b.w_out && a.w_rec == b.w_rec;
  }
};

struct RnnGradients {
  Matrix w_in, w_out, w_rec;

  RnnGradients() = default;
  RnnGradients(std::size_t dim, std::size_t hidden)
      : w_in(hidden, dim), w_out(dim, hidden), w_rec(hidden, hidden) {}

  Vector flatten() const {
    Vector flat;
    for (const Matrix* m : {&w_in, &w_out, &w_rec})
      flat.insert(flat.end(), m->data().begin(), m->data().end());
    return flat;
  }
};

struct MomentumState {
  Matrix w_in, w_out, w_rec;

  MomentumState() = default;
  MomentumState(std::size_t dim, std::size_t hidden)
      : w_in(hidden, dim), w_out(dim, hidden), w_rec(hidden, hidden) {}
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-7;
  std::size_t hidden = 50;
  double grad_clip = 5.0;
  std::size_t plateau_patience = 3;
  double lr_decay_factor = 0.5;
  std::size_t max_epochs = 40;
  std::uint64_t seed = 1;

  void validate() const {
    require(learning_rate > 0.0, ErrorCode::config, "learning_rate must be positive");
    require(momentum >= 0.0 && momentum < 1.0, ErrorCode::config,
            "momentum must lie in [0, 1)");
    require(weight_decay >= 0.0, ErrorCode::config, "weight_decay must be >= 0");
    require(hidden >= 1, ErrorCode::config, "hidden must be at least 1");
    require(grad_clip > 0.0, ErrorCode::config, "grad_clip must be positive");
    require(plateau_patience >= 1, ErrorCode::config, "plateau_patience must be at least 1");
    require(lr_decay_factor > 0.0 && lr_decay_factor < 1.0, ErrorCode::config,
            "lr_decay_factor must lie strictly between 0 and 1");
  }
};

struct StepOutput {
  Vector h;  // hidden state after consuming x
  Vector y;  // linear readout of h
};

// Entries i.i.d. uniform in [-0.1, 0.1], filled in flatten order so the
// result is a pure function of the stream.
inline RnnParams init_params(std::size_t dim, std::size_t hidden, RngStream& rng) {
  require(dim >= 1 && hidden >= 1, ErrorCode::invalid_argument,
          "init_params: dimensions must be positive");
  RnnParams p(dim, hidden);
  for (Matrix* m : {&p.w_in, &p.w_out, &p.w_rec})
    for (double& v : m->data()) v = rng.uniform(-0.1, 0.1);
  return p;
}

inline StepOutput forward_step(const RnnParams& p, const Vector& x, const Vector& h_prev) {
  require(x.size() == p.dim(), ErrorCode::dimension_mismatch,
          "forward_step: input size " + std::to_string(x.size()) + " != model dim " +
              std::to_string(p.dim()));
  require(h_prev.size() == p.hidden(), ErrorCode::dimension_mismatch,
          "forward_step: hidden size mismatch");
  Vector a = matvec(p.w_in, x);
  const Vector r = matvec(p.w_rec, h_prev);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += r[i];
  StepOutput out;
  out.h = sigmoid(a);
  out.y = matvec(p.w_out, out.h);
  return out;
}

// Softmax over candidate inner products with the readout y.
inline Vector score_future(const Vector& y, const std::vector<Vector>& candidates) {
  require(!candidates.empty(), ErrorCode::invalid_argument, "score_future: no candidates");
  Vector scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = dot(y, candidates[i]);
  return stable_softmax(scores);
}

namespace detail {

// Scores of album items [begin, end) against readout y.
inline Vector window_scores(const Vector& y, const Album& album, std::size_t begin,
                            std::size_t end) {
  Vector scores(end - begin);
  for (std::size_t j = begin; j < end; ++j) scores[j - begin] = dot(y, album.feature(j));
  return scores;
}

struct ForwardTape {
  std::vector<Vector> hs;  // hs[0] = 0, hs[n+1] = state after step n
  std::vector<Vector> ys;  // ys[n] = readout at step n
};

inline ForwardTape forward_sequence(const RnnParams& p, const std::vector<const Vector*>& inputs) {
  ForwardTape tape;
  tape.hs.reserve(inputs.size() + 1);
  tape.ys.reserve(inputs.size());
  tape.hs.emplace_back(p.hidden(), 0.0);
  for (const Vector* x : inputs) {
    StepOutput s = forward_step(p, *x, tape.hs.back());
    tape.hs.push_back(std::move(s.h));
    tape.ys.push_back(std::move(s.y));
  }
  return tape;
}

// Full-unroll backward pass given the loss gradient with respect to every
// readout. Shared by the story loss and the cluster-sequence baseline; the
// two differ only in how dys is produced.
inline RnnGradients backprop_sequence(const RnnParams& p,
                                      const std::vector<const Vector*>& inputs,
                                      const ForwardTape& tape,
                                      const std::vector<Vector>& dys) {
  require(dys.size() == inputs.size(), ErrorCode::internal,
          "backprop_sequence: one readout gradient per step required");
  const std::size_t hidden = p.hidden();
  RnnGradients g(p.dim(), hidden);
  Vector dh(hidden, 0.0);
  Vector da(hidden);
  for (std::size_t n = inputs.size(); n-- > 0;) {
    add_outer(g.w_out, dys[n], tape.hs[n + 1]);
    matvec_transpose_add(p.w_out, dys[n], dh);
    for (std::size_t k = 0; k < hidden; ++k) {
      const double h = tape.hs[n + 1][k];
      da[k] = dh[k] * h * (1.0 - h);
    }
    add_outer(g.w_in, da, *inputs[n]);
    add_outer(g.w_rec, da, tape.hs[n]);
    dh.assign(hidden, 0.0);
    matvec_transpose_add(p.w_rec, da, dh);
  }
  return g;
}

}  // namespace detail

// Negative log-likelihood of a story: step n consumes x_{z_n} and predicts
// x_{z_{n+1}} under a softmax over every album item strictly after z_n.
inline double sequence_nll(const RnnParams& p, const Album& album, const StoryIndices& z) {
  require(z.back() < album.size(), ErrorCode::invalid_argument,
          "sequence_nll: story leaves the album");
  Vector h(p.hidden(), 0.0);
  double nll = 0.0;
  for (std::size_t n = 0; n + 1 < z.size(); ++n) {
    StepOutput s = forward_step(p, album.feature(z[n]), h);
    h = std::move(s.h);
    const std::size_t begin = z[n] + 1;
    const Vector logp = log_softmax(detail::window_scores(s.y, album, begin, album.size()));
    nll -= logp[z[n + 1] - begin];
  }
  return nll;
}

struct NllAndGrads {
  double nll = 0.0;
  RnnGradients grads;
};

// Loss and exact full-unroll gradients in one pass.
inline NllAndGrads nll_and_grads(const RnnParams& p, const Album& album,
                                 const StoryIndices& z) {
  require(z.back() < album.size(), ErrorCode::invalid_argument,
          "nll_and_grads: story leaves the album");
  const std::size_t steps = z.size() - 1;
  std::vector<const Vector*> inputs(steps);
  for (std::size_t n = 0; n < steps; ++n) inputs[n] = &album.feature(z[n]);
  const detail::ForwardTape tape = detail::forward_sequence(p, inputs);

  NllAndGrads out;
  std::vector<Vector> dys(steps);
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t begin = z[n] + 1;
    const Vector scores = detail::window_scores(tape.ys[n], album, begin, album.size());
    const Vector logp = log_softmax(scores);
    const std::size_t target = z[n + 1] - begin;
    out.nll -= logp[target];
    // d nll / d y_n = sum_j (p_j - [j == target]) x_j over the window.
    Vector dy(p.dim(), 0.0);
    for (std::size_t j = 0; j < scores.size(); ++j) {
      const double w = std::exp(logp[j]) - (j == target ? 1.0 : 0.0);
      const Vector& xj = album.feature(begin + j);
      for (std::size_t d = 0; d < dy.size(); ++d) dy[d] += w * xj[d];
    }
    dys[n] = std::move(dy);
  }
  out.grads = detail::backprop_sequence(p, inputs, tape, dys);
  return out;
}

inline RnnGradients bptt_grads(const RnnParams& p, const Album& album, const StoryIndices& z) {
  return nll_and_grads(p, album, z).grads;
}

// Momentum SGD with per-element gradient clamping and L2 weight decay:
//   v <- momentum v - lr (clamp(g) + weight_decay w);  w <- w + v.
inline void sgd_update(RnnParams& p, const RnnGradients& g, const TrainConfig& cfg,
                       MomentumState& m) {
  cfg.validate();
  require(p.w_in.same_shape(g.w_in) && p.w_out.same_shape(g.w_out) &&
              p.w_rec.same_shape(g.w_rec),
          ErrorCode::dimension_mismatch, "sgd_update: gradient shape mismatch");
  require(p.w_in.same_shape(m.w_in) && p.w_out.same_shape(m.w_out) &&
              p.w_rec.same_shape(m.w_rec),
          ErrorCode::dimension_mismatch, "sgd_update: momentum shape mismatch");
  const Matrix* grads[] = {&g.w_in, &g.w_out, &g.w_rec};
  Matrix* vels[] = {&m.w_in, &m.w_out, &m.w_rec};
  Matrix* params[] = {&p.w_in, &p.w_out, &p.w_rec};
  for (int t = 0; t < 3; ++t) {
    const Vector& gd = grads[t]->data();
    Vector& vd = vels[t]->data();
    Vector& pd = params[t]->data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      require(std::isfinite(gd[i]), ErrorCode::numeric, "sgd_update: non-finite gradient");
      const double clipped = std::clamp(gd[i], -cfg.grad_clip, cfg.grad_clip);
      vd[i] = cfg.momentum * vd[i] - cfg.learning_rate * (clipped + cfg.weight_decay * pd[i]);
      pd[i] += vd[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Model files. Layout: magic "SRNM", u32 version = 1, u32 dim, u32 hidden,
// the three matrices as little-endian float64 row-major in flatten order,
// then a JSON trailer (training config, history, story length, mode,
// concept) running to end of file.

inline constexpr std::uint32_t kModelFileVersion = 1;

struct EpochStats {
  double mean_train_nll = 0.0;
  double val_score = 0.0;  // mean story log-likelihood on validation albums
  double learning_rate = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

inline void to_json(json& j, const EpochStats& e) {
  j = json{{"mean_train_nll", e.mean_train_nll},
           {"val_score", e.val_score},
           {"learning_rate", e.learning_rate}};
}

inline void from_json(const json& j, EpochStats& e) {
  e.mean_train_nll = j.at("mean_train_nll").is_null()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : j.at("mean_train_nll").get<double>();
  e.val_score = j.at("val_score").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                            : j.at("val_score").get<double>();
  e.learning_rate = j.at("learning_rate").get<double>();
}

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"hidden", c.hidden},
           {"grad_clip", c.grad_clip},
           {"plateau_patience", c.plateau_patience},
           {"lr_decay_factor", c.lr_decay_factor},
           {"max_epochs", c.max_epochs},
           {"seed", c.seed}};
}

inline void from_json(const json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("momentum").get_to(c.momentum);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("hidden").get_to(c.hidden);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("plateau_patience").get_to(c.plateau_patience);
  j.at("lr_decay_factor").get_to(c.lr_decay_factor);
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("seed").get_to(c.seed);
}

}  // namespace srnn

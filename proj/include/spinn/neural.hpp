#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "spinn/errors.hpp"
#include "spinn/json_util.hpp"
#include "spinn/rng.hpp"

namespace spinn {

// Fully connected network with tanh hidden layers and a linear output layer.
// Parameters live in one flat vector (per layer: W in column-major order,
// then b) so the optimiser can treat them uniformly.
struct MlpSpec {
  std::vector<int> layer_sizes;  // [n_in, hidden..., n_out]

  int n_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int n_inputs() const { return layer_sizes.front(); }
  int n_outputs() const { return layer_sizes.back(); }

  int n_params() const {
    int n = 0;
    for (int l = 0; l < n_layers(); ++l)
      n += layer_sizes[static_cast<std::size_t>(l) + 1] * (layer_sizes[static_cast<std::size_t>(l)] + 1);
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw Error("MlpSpec: need at least input and output sizes");
    for (int s : layer_sizes)
      if (s < 1) throw Error("MlpSpec: layer sizes must be positive");
  }

  // Flat offset of layer l's weight block; biases follow the weights.
  int w_offset(int l) const {
    int off = 0;
    for (int k = 0; k < l; ++k)
      off += layer_sizes[static_cast<std::size_t>(k) + 1] * (layer_sizes[static_cast<std::size_t>(k)] + 1);
    return off;
  }
  int b_offset(int l) const {
    return w_offset(l) + layer_sizes[static_cast<std::size_t>(l) + 1] * layer_sizes[static_cast<std::size_t>(l)];
  }
  int rows(int l) const { return layer_sizes[static_cast<std::size_t>(l) + 1]; }
  int cols(int l) const { return layer_sizes[static_cast<std::size_t>(l)]; }
};

struct Mlp {
  MlpSpec spec;
  Eigen::VectorXd params;

  Eigen::Map<const Eigen::MatrixXd> weight(int l) const {
    return {params.data() + spec.w_offset(l), spec.rows(l), spec.cols(l)};
  }
  Eigen::Map<const Eigen::VectorXd> bias(int l) const {
    return {params.data() + spec.b_offset(l), spec.rows(l)};
  }
};

// Parameter initialisation: W ~ N(0, sqrt(2 / (fan_in + fan_out))), b = 0.
// One random stream per layer keeps the draw order independent of how other
// layers are sized.
inline Mlp init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Mlp mlp;
  mlp.spec = spec;
  mlp.params = Eigen::VectorXd::Zero(spec.n_params());
  for (int l = 0; l < spec.n_layers(); ++l) {
    RandomStream rs(seed, stream::kind(stream::kInit, static_cast<std::uint64_t>(l)));
    const double std = std::sqrt(2.0 / (spec.cols(l) + spec.rows(l)));
    double* w = mlp.params.data() + spec.w_offset(l);
    const int nw = spec.rows(l) * spec.cols(l);
    for (int i = 0; i < nw; ++i) w[i] = rs.normal(0.0, std);
  }
  return mlp;
}

// Elementwise tanh through the exponential identity
//   tanh(h) = sgn(h) * (1 - e^{-2|h|}) / (1 + e^{-2|h|}).
// Eigen vectorises exp for doubles but not tanh, so this runs several times
// faster than h.array().tanh() on batch matrices while agreeing with it to
// ~2 ulp; the |h| form saturates to +/-1 without overflow.
inline Eigen::MatrixXd batch_tanh(const Eigen::MatrixXd& h) {
  const Eigen::ArrayXXd e = (-2.0 * h.array().abs()).exp();
  return (h.array().sign() * (1.0 - e) / (1.0 + e)).matrix();
}

// Activations kept for the backward pass: acts[0] is the input batch,
// acts[l + 1] the output of layer l.  Batches are stored one column per
// sample.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
};

inline Eigen::MatrixXd forward(const Mlp& mlp, const Eigen::MatrixXd& x,
                               ForwardCache* cache = nullptr) {
  if (x.rows() != mlp.spec.n_inputs()) throw Error("forward: input row count mismatch");
  const int L = mlp.spec.n_layers();
  if (cache) {
    cache->acts.assign(static_cast<std::size_t>(L) + 1, {});
    cache->acts[0] = x;
  }
  Eigen::MatrixXd a = x;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd h = (mlp.weight(l) * a).colwise() + mlp.bias(l);
    if (l + 1 < L) h = batch_tanh(h);
    a = std::move(h);
    if (cache) cache->acts[static_cast<std::size_t>(l) + 1] = a;
  }
  return a;
}

// Forward pass that also propagates an input tangent xdot (a directional
// derivative of the input batch), yielding the matching output tangent.
// Caches keep both the primal activations and the tangent intermediates,
// including hdot itself — the backward pass needs hdot where the activation
// saturates, and reconstructing it from adot would divide by ~0.
struct TangentCache {
  std::vector<Eigen::MatrixXd> acts;   // size L + 1
  std::vector<Eigen::MatrixXd> adots;  // size L + 1, adots[0] = xdot
  std::vector<Eigen::MatrixXd> hdots;  // size L, hidden layers only meaningful
};

struct TangentResult {
  Eigen::MatrixXd y;
  Eigen::MatrixXd ydot;
};

inline TangentResult forward_tangent(const Mlp& mlp, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& xdot, TangentCache* cache = nullptr) {
  if (x.rows() != mlp.spec.n_inputs()) throw Error("forward_tangent: input row count mismatch");
  if (xdot.rows() != x.rows() || xdot.cols() != x.cols())
    throw Error("forward_tangent: tangent shape mismatch");
  const int L = mlp.spec.n_layers();
  if (cache) {
    cache->acts.assign(static_cast<std::size_t>(L) + 1, {});
    cache->adots.assign(static_cast<std::size_t>(L) + 1, {});
    cache->hdots.assign(static_cast<std::size_t>(L), {});
    cache->acts[0] = x;
    cache->adots[0] = xdot;
  }
  Eigen::MatrixXd a = x, adot = xdot;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd h = (mlp.weight(l) * a).colwise() + mlp.bias(l);
    Eigen::MatrixXd hdot = mlp.weight(l) * adot;
    if (l + 1 < L) {
      a = batch_tanh(h);
      adot = (1.0 - a.array().square()) * hdot.array();
    } else {
      a = std::move(h);
      adot = hdot;
    }
    if (cache) {
      cache->acts[static_cast<std::size_t>(l) + 1] = a;
      cache->adots[static_cast<std::size_t>(l) + 1] = adot;
      cache->hdots[static_cast<std::size_t>(l)] = std::move(hdot);
    }
  }
  return {std::move(a), std::move(adot)};
}

// Reverse pass for the plain forward.  gy is dL/dy (same shape as the output
// batch); gradients are accumulated into `grad` (same layout as params).
// Returns dL/dx.
inline Eigen::MatrixXd backward(const Mlp& mlp, const ForwardCache& cache,
                                const Eigen::MatrixXd& gy, Eigen::VectorXd& grad) {
  const int L = mlp.spec.n_layers();
  if (grad.size() != mlp.params.size()) throw Error("backward: grad size mismatch");
  Eigen::MatrixXd ga = gy;
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::MatrixXd& a = cache.acts[static_cast<std::size_t>(l) + 1];
    const Eigen::MatrixXd& a_prev = cache.acts[static_cast<std::size_t>(l)];
    Eigen::MatrixXd gh;
    if (l + 1 < L)
      gh = ga.array() * (1.0 - a.array().square());
    else
      gh = std::move(ga);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + mlp.spec.w_offset(l), mlp.spec.rows(l),
                                   mlp.spec.cols(l));
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + mlp.spec.b_offset(l), mlp.spec.rows(l));
    gw.noalias() += gh * a_prev.transpose();
    gb.noalias() += gh.rowwise().sum();
    ga = mlp.weight(l).transpose() * gh;
  }
  return ga;
}

// Reverse pass over the tangent-propagating forward.  gy and gydot are the
// loss gradients with respect to the outputs and the output tangents.
// Per tanh layer, with s = 1 - a^2:
//   a    = tanh(h),        adot = s .* hdot
//   dL/dh    = dL/da .* s  +  dL/dadot .* (-2 a .* s .* hdot)
//   dL/dhdot = dL/dadot .* s
//   dL/dW   += dL/dh * a_prev^T  +  dL/dhdot * adot_prev^T
//   dL/db   += rowsum(dL/dh)
//   dL/da_prev    = W^T * dL/dh
//   dL/dadot_prev = W^T * dL/dhdot
// The output layer is linear, so there dL/dh = gy and dL/dhdot = gydot.
struct TangentAdjoint {
  Eigen::MatrixXd gx;
  Eigen::MatrixXd gxdot;
};

inline TangentAdjoint backward_tangent(const Mlp& mlp, const TangentCache& cache,
                                       const Eigen::MatrixXd& gy, const Eigen::MatrixXd& gydot,
                                       Eigen::VectorXd& grad) {
  const int L = mlp.spec.n_layers();
  if (grad.size() != mlp.params.size()) throw Error("backward_tangent: grad size mismatch");
  Eigen::MatrixXd ga = gy, gadot = gydot;
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::MatrixXd& a = cache.acts[static_cast<std::size_t>(l) + 1];
    const Eigen::MatrixXd& a_prev = cache.acts[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd& adot_prev = cache.adots[static_cast<std::size_t>(l)];
    Eigen::MatrixXd gh, ghdot;
    if (l + 1 < L) {
      const Eigen::ArrayXXd s = 1.0 - a.array().square();
      const Eigen::MatrixXd& hdot = cache.hdots[static_cast<std::size_t>(l)];
      gh = ga.array() * s + gadot.array() * (-2.0 * a.array() * s * hdot.array());
      ghdot = gadot.array() * s;
    } else {
      gh = std::move(ga);
      ghdot = std::move(gadot);
    }
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + mlp.spec.w_offset(l), mlp.spec.rows(l),
                                   mlp.spec.cols(l));
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + mlp.spec.b_offset(l), mlp.spec.rows(l));
    gw.noalias() += gh * a_prev.transpose();
    gw.noalias() += ghdot * adot_prev.transpose();
    gb.noalias() += gh.rowwise().sum();
    ga = mlp.weight(l).transpose() * gh;
    gadot = mlp.weight(l).transpose() * ghdot;
  }
  return {std::move(ga), std::move(gadot)};
}

// ---------------------------------------------------------------------------
// Adam optimiser (bias-corrected first/second moments)
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (lr <= 0) throw Error("AdamConfig: lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw Error("AdamConfig: betas must lie in [0, 1)");
    if (eps <= 0) throw Error("AdamConfig: eps must be positive");
  }
};

struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;

  void init(Eigen::Index n) {
    m = Eigen::VectorXd::Zero(n);
    v = Eigen::VectorXd::Zero(n);
    step = 0;
  }
};

inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& st,
                      const AdamConfig& cfg) {
  if (st.m.size() != params.size()) throw Error("adam_step: state size mismatch");
  if (grad.size() != params.size()) throw Error("adam_step: grad size mismatch");
  ++st.step;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  params.array() -=
      cfg.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + cfg.eps);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json mlp_to_json(const Mlp& mlp) {
  json j;
  j["layer_sizes"] = mlp.spec.layer_sizes;
  json p = json::array();
  for (Eigen::Index i = 0; i < mlp.params.size(); ++i) p.push_back(mlp.params(i));
  j["params"] = std::move(p);
  return j;
}

inline Mlp mlp_from_json(const json& j) {
  require_keys(j, {"layer_sizes", "params"}, "network");
  Mlp mlp;
  mlp.spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  mlp.spec.validate();
  const auto& p = j.at("params");
  if (static_cast<int>(p.size()) != mlp.spec.n_params())
    throw Error("network: parameter count does not match layer sizes");
  mlp.params.resize(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i)
    mlp.params(static_cast<Eigen::Index>(i)) = p[i].get<double>();
  return mlp;
}

}  // namespace spinn

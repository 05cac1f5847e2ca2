#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spinn/dataset.hpp"
#include "spinn/errors.hpp"
#include "spinn/json_util.hpp"
#include "spinn/netmodel.hpp"
#include "spinn/neural.hpp"
#include "spinn/rng.hpp"
#include "spinn/simulator.hpp"

namespace spinn {

enum class TrainMode { kSpinn, kPinnSingleOc, kBaseline };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kSpinn: return "spinn";
    case TrainMode::kPinnSingleOc: return "pinn_single_oc";
    case TrainMode::kBaseline: return "baseline";
  }
  throw Error("unknown train mode");
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "spinn") return TrainMode::kSpinn;
  if (s == "pinn" || s == "pinn_single_oc") return TrainMode::kPinnSingleOc;
  if (s == "baseline") return TrainMode::kBaseline;
  throw Error("unknown train mode '" + s + "' (expected spinn|pinn|baseline)");
}

// Minibatch size per epoch: fixed batches early, full-batch after a cutoff.
struct BatchSchedule {
  int batch_size = 256;
  int full_batch_after = 1000;  // epochs with index >= cutoff run full-batch

  int effective(int epoch, int n_train) const {
    if (n_train <= 0) return 0;
    if (epoch >= full_batch_after) return n_train;
    return std::min(batch_size, n_train);
  }

  void validate() const {
    if (batch_size < 1) throw Error("BatchSchedule: batch_size must be >= 1");
    if (full_batch_after < 0) throw Error("BatchSchedule: full_batch_after must be >= 0");
  }
};

struct TrainConfig {
  TrainMode mode = TrainMode::kSpinn;
  int epochs = 2000;
  BatchSchedule schedule;
  double lambda_data = 1.0;
  double lambda_phys = 1.0;
  double lambda_anchor = 1.0;
  std::vector<int> hidden1{128, 128};  // state network hidden sizes
  std::vector<int> hidden2{128, 128};  // power network hidden sizes
  AdamConfig adam;
  std::uint64_t seed = 0;
  int pinn_reference_oc = -1;          // required in pinn_single_oc mode
  double early_stop_epsilon = 0.0;     // <= 0 disables early stopping

  void validate() const {
    if (epochs < 0) throw Error("TrainConfig: epochs must be >= 0");
    schedule.validate();
    adam.validate();
    if (lambda_data < 0 || lambda_phys < 0 || lambda_anchor < 0)
      throw Error("TrainConfig: loss weights must be non-negative");
    if (hidden1.empty() || hidden2.empty())
      throw Error("TrainConfig: need at least one hidden layer per network");
    if (mode == TrainMode::kPinnSingleOc && pinn_reference_oc < 0)
      throw Error("TrainConfig: pinn_single_oc mode requires a reference OC");
  }

  // Mode-specific weight overrides: the baseline trains on data only; the
  // single-OC physics mode has no trainable power network to anchor.
  TrainConfig effective() const {
    TrainConfig c = *this;
    if (c.mode == TrainMode::kBaseline) {
      c.lambda_phys = 0.0;
      c.lambda_anchor = 0.0;
    }
    if (c.mode == TrainMode::kPinnSingleOc) c.lambda_anchor = 0.0;
    return c;
  }
};

struct LossBreakdown {
  double l_data = 0.0;
  double l_physics = 0.0;
  double l_anchor = 0.0;
  double lambda_data = 1.0;
  double lambda_phys = 1.0;
  double lambda_anchor = 1.0;
  double total = 0.0;  // always lambda_data*l_data + lambda_phys*l_physics + lambda_anchor*l_anchor
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double val_data = 0.0;  // validation data loss (normalized targets)
};

// Everything a prediction needs: the state network (inputs [s, t] normalized,
// outputs normalized states), the power network (inputs [normalized states,
// normalized s], outputs physical [P_mech; P_elec]), machine constants, and
// the normalization record.
struct ModelBundle {
  Mlp nn1;
  Mlp nn2;
  MachineConstants mc;
  FeatureNorm norm;
  int n_machines = 0;
};

struct TrainedModel {
  ModelBundle bundle;
  TrainMode mode = TrainMode::kSpinn;
  std::vector<EpochRecord> history;
  std::string dataset_fingerprint;
  double train_seconds = 0.0;
  std::uint64_t seed = 0;
  bool aborted = false;        // non-finite loss encountered
  int last_finite_epoch = -1;  // bundle holds the parameters from this epoch
};

inline json train_config_to_json(const TrainConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.schedule.batch_size;
  j["full_batch_after"] = c.schedule.full_batch_after;
  j["lambda_data"] = c.lambda_data;
  j["lambda_phys"] = c.lambda_phys;
  j["lambda_anchor"] = c.lambda_anchor;
  j["hidden1"] = c.hidden1;
  j["hidden2"] = c.hidden2;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
  j["seed"] = c.seed;
  j["pinn_reference_oc"] = c.pinn_reference_oc;
  j["early_stop_epsilon"] = c.early_stop_epsilon;
  return j;
}

inline TrainConfig train_config_from_json(const json& j) {
  require_keys(j,
               {"mode", "epochs", "batch_size", "full_batch_after", "lambda_data", "lambda_phys",
                "lambda_anchor", "hidden1", "hidden2", "lr", "beta1", "beta2", "adam_eps", "seed",
                "pinn_reference_oc", "early_stop_epsilon"},
               "training config");
  TrainConfig c;
  if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) c.schedule.batch_size = j.at("batch_size").get<int>();
  if (j.contains("full_batch_after"))
    c.schedule.full_batch_after = j.at("full_batch_after").get<int>();
  if (j.contains("lambda_data")) c.lambda_data = j.at("lambda_data").get<double>();
  if (j.contains("lambda_phys")) c.lambda_phys = j.at("lambda_phys").get<double>();
  if (j.contains("lambda_anchor")) c.lambda_anchor = j.at("lambda_anchor").get<double>();
  if (j.contains("hidden1")) c.hidden1 = j.at("hidden1").get<std::vector<int>>();
  if (j.contains("hidden2")) c.hidden2 = j.at("hidden2").get<std::vector<int>>();
  if (j.contains("lr")) c.adam.lr = j.at("lr").get<double>();
  if (j.contains("beta1")) c.adam.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.adam.beta2 = j.at("beta2").get<double>();
  if (j.contains("adam_eps")) c.adam.eps = j.at("adam_eps").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("pinn_reference_oc"))
    c.pinn_reference_oc = j.at("pinn_reference_oc").get<int>();
  if (j.contains("early_stop_epsilon"))
    c.early_stop_epsilon = j.at("early_stop_epsilon").get<double>();
  return c;
}

// ---------------------------------------------------------------------------
// Physics residual (single formula used everywhere)
// ---------------------------------------------------------------------------

// Residual of the machine dynamics for one (x, xdot, u) triple in physical
// units, with x = [delta; omega] and u = [P_mech; P_elec]:
//   r_k     = d delta_k / dt - omega_k
//   r_{n+k} = d omega_k / dt + (d_k omega_k + P_elec,k - P_mech,k) / m_k
inline Eigen::VectorXd swing_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& xdot,
                                      const Eigen::VectorXd& u, const MachineConstants& mc) {
  const Eigen::Index n = mc.inertia.size();
  if (x.size() != 2 * n || xdot.size() != 2 * n || u.size() != 2 * n)
    throw Error("swing_residual: dimension mismatch");
  Eigen::VectorXd r(2 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    r(k) = xdot(k) - x(n + k);
    r(n + k) = xdot(n + k) +
               (mc.damping(k) * x(n + k) + u(n + k) - u(k)) / mc.inertia(k);
  }
  return r;
}

// Column-wise batched version (columns are samples).
inline Eigen::MatrixXd swing_residual_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xdot,
                                            const Eigen::MatrixXd& u, const MachineConstants& mc) {
  Eigen::MatrixXd r(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    r.col(c) = swing_residual(x.col(c), xdot.col(c), u.col(c), mc);
  return r;
}

// u = [P_mech; P_elec(delta)] for one state under a given reduced model.
inline Eigen::VectorXd u_from_model(const ReducedModel& rm, const Eigen::VectorXd& x) {
  const int n = rm.n();
  if (x.size() != 2 * n) throw Error("u_from_model: state dimension mismatch");
  Eigen::VectorXd u(2 * n);
  u.head(n) = rm.p_mech;
  u.tail(n) = electrical_power(rm, x.head(n));
  return u;
}

// Power labels for labeled samples of one operating condition.  Each sample's
// u is evaluated under the reduced model of the stage active at its time, so
// labels taken inside the fault window follow the faulted network.
inline Eigen::MatrixXd compute_u_labels(const NetworkCase& net, const OperatingCondition& oc,
                                        const FaultSchedule& fs, const std::vector<double>& times,
                                        const Eigen::MatrixXd& states) {
  fs.validate();
  if (states.rows() != static_cast<Eigen::Index>(times.size()))
    throw Error("compute_u_labels: times/states size mismatch");
  const PowerFlowSolution pf = solve_power_flow(net, oc);
  const ReducedModel rm_pre = build_reduced_model(net, oc, pf, StageSpec::prefault());
  const ReducedModel rm_fault = build_reduced_model(net, oc, pf, StageSpec::fault(fs.fault_bus));
  const ReducedModel rm_post = build_reduced_model(net, oc, pf, StageSpec::postfault());
  Eigen::MatrixXd u(states.rows(), states.cols());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Stage st = fs.stage_at(times[i]);
    const ReducedModel& rm =
        st == Stage::prefault ? rm_pre : (st == Stage::fault ? rm_fault : rm_post);
    u.row(static_cast<Eigen::Index>(i)) =
        u_from_model(rm, states.row(static_cast<Eigen::Index>(i)));
  }
  return u;
}

// ---------------------------------------------------------------------------
// Normalization helpers
// ---------------------------------------------------------------------------

// Column-wise (raw - mean) / std for NN1 inputs.
inline Eigen::MatrixXd normalize_inputs(const FeatureNorm& norm, const Eigen::MatrixXd& raw) {
  if (raw.rows() != norm.in_mean.size()) throw Error("normalize_inputs: feature count mismatch");
  return (raw.colwise() - norm.in_mean).array().colwise() / norm.in_std.array();
}

inline Eigen::MatrixXd normalize_states(const FeatureNorm& norm, const Eigen::MatrixXd& x) {
  if (x.rows() != norm.x_mean.size()) throw Error("normalize_states: state count mismatch");
  return (x.colwise() - norm.x_mean).array().colwise() / norm.x_std.array();
}

inline Eigen::MatrixXd denormalize_states(const FeatureNorm& norm, const Eigen::MatrixXd& y) {
  if (y.rows() != norm.x_mean.size()) throw Error("denormalize_states: state count mismatch");
  return (y.array().colwise() * norm.x_std.array()).colwise() + norm.x_mean.array();
}

// ---------------------------------------------------------------------------
// Loss + gradient of one step
// ---------------------------------------------------------------------------

// One labeled minibatch, pre-normalized.  Columns are samples.
struct LabeledBatch {
  Eigen::MatrixXd x_in;    // NN1 inputs, n_features x B
  Eigen::MatrixXd y_norm;  // normalized state targets, 2n x B
  Eigen::MatrixXd u_label; // physical power labels, 2n x B (empty if unused)
};

struct CollocBatch {
  Eigen::MatrixXd x_in;  // NN1 inputs, n_features x B
};

struct StepGrad {
  LossBreakdown loss;
  Eigen::VectorXd g1;  // gradient w.r.t. nn1 params
  Eigen::VectorXd g2;  // gradient w.r.t. nn2 params
  bool nn2_used = false;
};

namespace detail {

// Physics residual + backprop for one collocation batch.  Accumulates into
// g1 (and g2 in joint mode), returns the residual mean-square.
inline double physics_term(const ModelBundle& b, const CollocBatch& col, double lambda_phys,
                           TrainMode mode, const ReducedModel* rm_ref, Eigen::VectorXd& g1,
                           Eigen::VectorXd& g2, bool& nn2_used) {
  const Eigen::Index bc = col.x_in.cols();
  const Eigen::Index nf = col.x_in.rows();
  const int n = b.n_machines;
  const Eigen::Index two_n = 2 * n;

  // Time tangent of the normalized inputs: only the (last) time feature
  // varies with physical time, scaled by the chain factor of normalization.
  Eigen::MatrixXd xdot_in = Eigen::MatrixXd::Zero(nf, bc);
  xdot_in.row(nf - 1).setConstant(1.0 / b.norm.in_std(nf - 1));

  TangentCache tc;
  const TangentResult tr = forward_tangent(b.nn1, col.x_in, xdot_in, &tc);

  // Physical states and their time derivatives.
  const Eigen::MatrixXd xh = denormalize_states(b.norm, tr.y);
  const Eigen::MatrixXd xdph = tr.ydot.array().colwise() * b.norm.x_std.array();

  // Power inputs u per collocation point.
  Eigen::MatrixXd uh(two_n, bc);
  ForwardCache nn2_cache;
  Eigen::MatrixXd nn2_in;
  if (mode == TrainMode::kSpinn) {
    nn2_in.resize(two_n + (nf - 1), bc);
    nn2_in.topRows(two_n) = tr.y;                 // normalized predicted states
    nn2_in.bottomRows(nf - 1) = col.x_in.topRows(nf - 1);  // normalized s
    uh = forward(b.nn2, nn2_in, &nn2_cache);
  } else {
    if (!rm_ref) throw Error("physics_term: missing reference model");
    for (Eigen::Index c = 0; c < bc; ++c)
      uh.col(c) = u_from_model(*rm_ref, xh.col(c));
  }

  const Eigen::MatrixXd r = swing_residual_batch(xh, xdph, uh, b.mc);
  const double denom = static_cast<double>(two_n) * static_cast<double>(bc);
  const double l_phys = r.squaredNorm() / denom;

  // d(lambda_phys * l_phys) / dr
  const Eigen::MatrixXd gr = (2.0 * lambda_phys / denom) * r;

  // Adjoints of the NN1 raw outputs (gy) and raw tangents (gydot).
  // xdph_j = x_std_j * ydot_j for every component j.
  Eigen::MatrixXd gydot = gr.array().colwise() * b.norm.x_std.array();
  Eigen::MatrixXd gy = Eigen::MatrixXd::Zero(two_n, bc);
  Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(two_n, bc);
  for (int k = 0; k < n; ++k) {
    const double m_k = b.mc.inertia(k), d_k = b.mc.damping(k);
    // r_k = xdph_k - xh_{n+k}
    gy.row(n + k) -= gr.row(k) * b.norm.x_std(n + k);
    // r_{n+k} = xdph_{n+k} + (d_k xh_{n+k} + u_{n+k} - u_k) / m_k
    gy.row(n + k) += gr.row(n + k) * (d_k / m_k) * b.norm.x_std(n + k);
    gu.row(n + k) = gr.row(n + k) / m_k;
    gu.row(k) = -gr.row(n + k) / m_k;
  }

  if (mode == TrainMode::kSpinn) {
    const Eigen::MatrixXd gin = backward(b.nn2, nn2_cache, gu, g2);
    gy += gin.topRows(two_n);
    nn2_used = true;
  } else {
    // u = [P_mech; P_elec(delta)] with fixed model: only P_elec depends on
    // the predicted angles, via the electrical-power Jacobian.
    for (Eigen::Index c = 0; c < bc; ++c) {
      const Eigen::MatrixXd jac = electrical_power_jacobian(*rm_ref, xh.col(c).head(n));
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += gu(n + k, c) * jac(k, j);
        gy(j, c) += acc * b.norm.x_std(j);
      }
    }
  }

  backward_tangent(b.nn1, tc, gy, gydot, g1);
  return l_phys;
}

}  // namespace detail

// Loss and parameter gradients for one optimization step.  `lab` may be null
// (physics-only step), as may `col` (data-only step).  In pinn_single_oc mode
// `rm_ref` supplies the fixed algebraic model.  Terms with zero weight are
// skipped entirely, which makes spinn with lambda_phys = lambda_anchor = 0 and
// no collocation bit-for-bit identical to baseline mode.
inline StepGrad compute_loss_and_gradient(const ModelBundle& b, const TrainConfig& cfg,
                                          const LabeledBatch* lab, const CollocBatch* col,
                                          const ReducedModel* rm_ref = nullptr) {
  StepGrad sg;
  sg.loss.lambda_data = cfg.lambda_data;
  sg.loss.lambda_phys = cfg.lambda_phys;
  sg.loss.lambda_anchor = cfg.lambda_anchor;
  sg.g1 = Eigen::VectorXd::Zero(b.nn1.params.size());
  sg.g2 = Eigen::VectorXd::Zero(b.nn2.params.size());

  if (lab && lab->x_in.cols() > 0) {
    const Eigen::Index bs = lab->x_in.cols();
    ForwardCache fc;
    const Eigen::MatrixXd y = forward(b.nn1, lab->x_in, &fc);
    const Eigen::MatrixXd res = y - lab->y_norm;
    const double denom = static_cast<double>(res.size());
    sg.loss.l_data = res.squaredNorm() / denom;
    if (cfg.lambda_data != 0.0) {
      const Eigen::MatrixXd gy = (2.0 * cfg.lambda_data / denom) * res;
      backward(b.nn1, fc, gy, sg.g1);
    }

    if (cfg.mode == TrainMode::kSpinn && cfg.lambda_anchor != 0.0 && lab->u_label.cols() == bs) {
      // Anchor the power network at the true (labeled) states.
      Eigen::MatrixXd anchor_in(lab->y_norm.rows() + lab->x_in.rows() - 1, bs);
      anchor_in.topRows(lab->y_norm.rows()) = lab->y_norm;
      anchor_in.bottomRows(lab->x_in.rows() - 1) = lab->x_in.topRows(lab->x_in.rows() - 1);
      ForwardCache fc2;
      const Eigen::MatrixXd u = forward(b.nn2, anchor_in, &fc2);
      const Eigen::MatrixXd ures = u - lab->u_label;
      const double udenom = static_cast<double>(ures.size());
      sg.loss.l_anchor = ures.squaredNorm() / udenom;
      const Eigen::MatrixXd gu = (2.0 * cfg.lambda_anchor / udenom) * ures;
      backward(b.nn2, fc2, gu, sg.g2);
      sg.nn2_used = true;
    }
  }

  if (col && col->x_in.cols() > 0 && cfg.mode != TrainMode::kBaseline &&
      cfg.lambda_phys != 0.0) {
    sg.loss.l_physics = detail::physics_term(b, *col, cfg.lambda_phys, cfg.mode, rm_ref, sg.g1,
                                             sg.g2, sg.nn2_used);
  }

  sg.loss.total = cfg.lambda_data * sg.loss.l_data + cfg.lambda_phys * sg.loss.l_physics +
                  cfg.lambda_anchor * sg.loss.l_anchor;
  return sg;
}

// Physics residuals of a trained bundle at given raw (s, t) inputs (columns).
// Exposed for residual diagnostics; uses exactly the training-time formula.
inline Eigen::MatrixXd model_physics_residual(const ModelBundle& b, const Eigen::MatrixXd& raw_in,
                                              TrainMode mode = TrainMode::kSpinn,
                                              const ReducedModel* rm_ref = nullptr) {
  const Eigen::MatrixXd x_in = normalize_inputs(b.norm, raw_in);
  const Eigen::Index nf = x_in.rows();
  Eigen::MatrixXd xdot_in = Eigen::MatrixXd::Zero(nf, x_in.cols());
  xdot_in.row(nf - 1).setConstant(1.0 / b.norm.in_std(nf - 1));
  const TangentResult tr = forward_tangent(b.nn1, x_in, xdot_in);
  const Eigen::MatrixXd xh = denormalize_states(b.norm, tr.y);
  const Eigen::MatrixXd xdph = tr.ydot.array().colwise() * b.norm.x_std.array();
  const Eigen::Index two_n = 2 * b.n_machines;
  Eigen::MatrixXd uh(two_n, x_in.cols());
  if (mode == TrainMode::kSpinn) {
    Eigen::MatrixXd nn2_in(two_n + (nf - 1), x_in.cols());
    nn2_in.topRows(two_n) = tr.y;
    nn2_in.bottomRows(nf - 1) = x_in.topRows(nf - 1);
    uh = forward(b.nn2, nn2_in);
  } else {
    if (!rm_ref) throw Error("model_physics_residual: missing reference model");
    for (Eigen::Index c = 0; c < x_in.cols(); ++c) uh.col(c) = u_from_model(*rm_ref, xh.col(c));
  }
  return swing_residual_batch(xh, xdph, uh, b.mc);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

inline TrainedModel train(const NetworkCase& net, const FaultSchedule& fs, const Dataset& ds,
                          const TrainConfig& cfg_in, const std::string& dataset_fingerprint = "") {
  const auto t_start = std::chrono::steady_clock::now();
  cfg_in.validate();
  const TrainConfig cfg = cfg_in.effective();
  if (ds.train_idx.empty()) throw Error("train: dataset has no training samples");

  const int n = ds.n_machines;
  const Eigen::Index two_n = 2 * n;
  const Eigen::Index nf = ds.norm.n_features();

  TrainedModel tm;
  tm.mode = cfg.mode;
  tm.seed = cfg.seed;
  tm.dataset_fingerprint = dataset_fingerprint;

  ModelBundle& b = tm.bundle;
  b.n_machines = n;
  b.norm = ds.norm;
  b.mc = MachineConstants::from_case(net);
  MlpSpec s1, s2;
  s1.layer_sizes.push_back(static_cast<int>(nf));
  for (int h : cfg.hidden1) s1.layer_sizes.push_back(h);
  s1.layer_sizes.push_back(static_cast<int>(two_n));
  s2.layer_sizes.push_back(static_cast<int>(two_n + nf - 1));
  for (int h : cfg.hidden2) s2.layer_sizes.push_back(h);
  s2.layer_sizes.push_back(static_cast<int>(two_n));
  b.nn1 = init_mlp(s1, cfg.seed);
  b.nn2 = init_mlp(s2, RandomStream::mix(cfg.seed + 0x5157u));

  // Precompute normalized inputs/targets for every labeled sample and
  // collocation point (index-aligned with the dataset).
  const Eigen::Index n_lab = static_cast<Eigen::Index>(ds.labeled.size());
  Eigen::MatrixXd xl(nf, n_lab), yn(two_n, n_lab);
  for (Eigen::Index i = 0; i < n_lab; ++i) {
    const auto& s = ds.labeled[static_cast<std::size_t>(i)];
    xl.col(i) = ds.features(s.oc_id, s.t);
    yn.col(i) = s.x;
  }
  xl = normalize_inputs(ds.norm, xl);
  yn = normalize_states(ds.norm, yn);

  // Physical power labels for the anchor term, grouped per OC.
  const bool anchor_active = cfg.mode == TrainMode::kSpinn && cfg.lambda_anchor != 0.0;
  Eigen::MatrixXd ul;
  if (anchor_active) {
    ul.resize(two_n, n_lab);
    std::vector<std::vector<Eigen::Index>> by_oc(ds.ocs.size());
    for (Eigen::Index i = 0; i < n_lab; ++i)
      by_oc[static_cast<std::size_t>(ds.labeled[static_cast<std::size_t>(i)].oc_id)].push_back(i);
    for (std::size_t o = 0; o < by_oc.size(); ++o) {
      if (by_oc[o].empty()) continue;
      std::vector<double> times;
      Eigen::MatrixXd states(static_cast<Eigen::Index>(by_oc[o].size()), two_n);
      for (std::size_t r = 0; r < by_oc[o].size(); ++r) {
        const auto& s = ds.labeled[static_cast<std::size_t>(by_oc[o][r])];
        times.push_back(s.t);
        states.row(static_cast<Eigen::Index>(r)) = s.x;
      }
      const Eigen::MatrixXd u = compute_u_labels(net, ds.ocs[o].oc, fs, times, states);
      for (std::size_t r = 0; r < by_oc[o].size(); ++r)
        ul.col(by_oc[o][r]) = u.row(static_cast<Eigen::Index>(r));
    }
  }

  const Eigen::Index n_col = static_cast<Eigen::Index>(ds.collocation.size());
  Eigen::MatrixXd xc(nf, n_col);
  for (Eigen::Index i = 0; i < n_col; ++i) {
    const auto& p = ds.collocation[static_cast<std::size_t>(i)];
    xc.col(i) = ds.features(p.oc_id, p.t);
  }
  if (n_col > 0) xc = normalize_inputs(ds.norm, xc);

  // Fixed algebraic model for pinn_single_oc mode (postfault network of the
  // reference OC).
  ReducedModel rm_ref;
  const bool use_ref = cfg.mode == TrainMode::kPinnSingleOc;
  if (use_ref) {
    const OperatingCondition& oc = ds.oc_by_id(cfg.pinn_reference_oc);
    const PowerFlowSolution pf = solve_power_flow(net, oc);
    rm_ref = build_reduced_model(net, oc, pf, StageSpec::postfault());
  }

  // Validation split matrices.
  const Eigen::Index n_val = static_cast<Eigen::Index>(ds.val_idx.size());
  Eigen::MatrixXd xv(nf, n_val), yv(two_n, n_val);
  for (Eigen::Index i = 0; i < n_val; ++i) {
    xv.col(i) = xl.col(ds.val_idx[static_cast<std::size_t>(i)]);
    yv.col(i) = yn.col(ds.val_idx[static_cast<std::size_t>(i)]);
  }

  AdamState st1, st2;
  st1.init(b.nn1.params.size());
  st2.init(b.nn2.params.size());
  Eigen::VectorXd snap1 = b.nn1.params, snap2 = b.nn2.params;

  const int n_train = static_cast<int>(ds.train_idx.size());
  const bool physics_active =
      cfg.mode != TrainMode::kBaseline && cfg.lambda_phys != 0.0 && n_col > 0;

  tm.history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const int bsize = cfg.schedule.effective(epoch, n_train);
    const int k_steps = (n_train + bsize - 1) / bsize;

    std::vector<int> perm = ds.train_idx;
    {
      RandomStream rs(cfg.seed, stream::kind(stream::kEpochLabeled,
                                             static_cast<std::uint64_t>(epoch)));
      shuffle(perm, rs);
    }
    std::vector<int> cperm;
    if (physics_active) {
      cperm.resize(static_cast<std::size_t>(n_col));
      for (Eigen::Index i = 0; i < n_col; ++i) cperm[static_cast<std::size_t>(i)] = static_cast<int>(i);
      RandomStream rs(cfg.seed,
                      stream::kind(stream::kEpochColl, static_cast<std::uint64_t>(epoch)));
      shuffle(cperm, rs);
    }

    LossBreakdown acc;
    acc.lambda_data = cfg.lambda_data;
    acc.lambda_phys = cfg.lambda_phys;
    acc.lambda_anchor = cfg.lambda_anchor;
    for (int step = 0; step < k_steps; ++step) {
      const int lab_lo = step * bsize;
      const int lab_hi = std::min(lab_lo + bsize, n_train);
      LabeledBatch lab;
      lab.x_in.resize(nf, lab_hi - lab_lo);
      lab.y_norm.resize(two_n, lab_hi - lab_lo);
      if (anchor_active) lab.u_label.resize(two_n, lab_hi - lab_lo);
      for (int i = lab_lo; i < lab_hi; ++i) {
        const Eigen::Index src = perm[static_cast<std::size_t>(i)];
        lab.x_in.col(i - lab_lo) = xl.col(src);
        lab.y_norm.col(i - lab_lo) = yn.col(src);
        if (anchor_active) lab.u_label.col(i - lab_lo) = ul.col(src);
      }

      CollocBatch col;
      if (physics_active) {
        // Spread the collocation pool evenly over this epoch's steps.
        const int base = static_cast<int>(n_col) / k_steps;
        const int extra = static_cast<int>(n_col) % k_steps;
        const int lo = step * base + std::min(step, extra);
        const int sz = base + (step < extra ? 1 : 0);
        col.x_in.resize(nf, sz);
        for (int i = 0; i < sz; ++i)
          col.x_in.col(i) = xc.col(cperm[static_cast<std::size_t>(lo + i)]);
      }

      const StepGrad sg = compute_loss_and_gradient(b, cfg, &lab, physics_active ? &col : nullptr,
                                                    use_ref ? &rm_ref : nullptr);
      adam_step(b.nn1.params, sg.g1, st1, cfg.adam);
      if (sg.nn2_used) adam_step(b.nn2.params, sg.g2, st2, cfg.adam);

      acc.l_data += sg.loss.l_data;
      acc.l_physics += sg.loss.l_physics;
      acc.l_anchor += sg.loss.l_anchor;
    }
    acc.l_data /= k_steps;
    acc.l_physics /= k_steps;
    acc.l_anchor /= k_steps;
    acc.total = cfg.lambda_data * acc.l_data + cfg.lambda_phys * acc.l_physics +
                cfg.lambda_anchor * acc.l_anchor;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = acc;
    if (n_val > 0) {
      const Eigen::MatrixXd yp = forward(b.nn1, xv);
      rec.val_data = (yp - yv).squaredNorm() / static_cast<double>(yp.size());
    }

    const bool finite = std::isfinite(rec.loss.total) && std::isfinite(rec.val_data) &&
                        b.nn1.params.allFinite() && b.nn2.params.allFinite();
    if (!finite) {
      b.nn1.params = snap1;
      b.nn2.params = snap2;
      tm.aborted = true;
      break;
    }
    tm.history.push_back(rec);
    tm.last_finite_epoch = epoch;
    snap1 = b.nn1.params;
    snap2 = b.nn2.params;

    if (cfg.early_stop_epsilon > 0.0 && rec.loss.total <= cfg.early_stop_epsilon) break;
  }

  tm.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return tm;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// Evaluate the state network over a time grid for one operating condition.
// One batched matrix pass; rows of the result are [delta; omega] states.
inline Trajectory predict_trajectory(const ModelBundle& b, const OperatingCondition& oc,
                                     const std::vector<double>& times) {
  const Eigen::Index nf = b.norm.n_features();
  const Eigen::Index nt = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd raw(nf, nt);
  Eigen::VectorXd feat(nf);
  for (std::size_t i = 0; i < oc.loads.size(); ++i) {
    feat(2 * static_cast<Eigen::Index>(i)) = oc.loads[i].real();
    feat(2 * static_cast<Eigen::Index>(i) + 1) = oc.loads[i].imag();
  }
  for (Eigen::Index i = 0; i < nt; ++i) {
    feat(nf - 1) = times[static_cast<std::size_t>(i)];
    raw.col(i) = feat;
  }
  const Eigen::MatrixXd y = forward(b.nn1, normalize_inputs(b.norm, raw));
  Trajectory tr;
  tr.oc_id = oc.id;
  tr.times = times;
  tr.states = denormalize_states(b.norm, y).transpose();
  return tr;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointSchemaVersion = 1;

inline json model_bundle_to_json(const ModelBundle& b) {
  auto vec = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  json j;
  j["nn1"] = mlp_to_json(b.nn1);
  j["nn2"] = mlp_to_json(b.nn2);
  j["inertia"] = vec(b.mc.inertia);
  j["damping"] = vec(b.mc.damping);
  j["normalization"] = feature_norm_to_json(b.norm);
  j["n_machines"] = b.n_machines;
  return j;
}

inline ModelBundle model_bundle_from_json(const json& j) {
  require_keys(j, {"nn1", "nn2", "inertia", "damping", "normalization", "n_machines"}, "model");
  auto vec = [](const json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
  };
  ModelBundle b;
  b.nn1 = mlp_from_json(j.at("nn1"));
  b.nn2 = mlp_from_json(j.at("nn2"));
  b.mc.inertia = vec(j.at("inertia"));
  b.mc.damping = vec(j.at("damping"));
  b.norm = feature_norm_from_json(j.at("normalization"));
  b.n_machines = j.at("n_machines").get<int>();
  return b;
}

inline json trained_model_to_json(const TrainedModel& tm) {
  json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["mode"] = to_string(tm.mode);
  j["model"] = model_bundle_to_json(tm.bundle);
  j["seed"] = tm.seed;
  j["dataset_fingerprint"] = tm.dataset_fingerprint;
  j["train_seconds"] = tm.train_seconds;
  j["aborted"] = tm.aborted;
  j["last_finite_epoch"] = tm.last_finite_epoch;
  json hist = json::array();
  for (const auto& r : tm.history) {
    hist.push_back(json{{"epoch", r.epoch},
                        {"l_data", r.loss.l_data},
                        {"l_physics", r.loss.l_physics},
                        {"l_anchor", r.loss.l_anchor},
                        {"total", r.loss.total},
                        {"val_data", r.val_data}});
  }
  j["history"] = std::move(hist);
  json w;
  w["lambda_data"] = tm.history.empty() ? 1.0 : tm.history.back().loss.lambda_data;
  w["lambda_phys"] = tm.history.empty() ? 1.0 : tm.history.back().loss.lambda_phys;
  w["lambda_anchor"] = tm.history.empty() ? 1.0 : tm.history.back().loss.lambda_anchor;
  j["loss_weights"] = std::move(w);
  return j;
}

inline TrainedModel trained_model_from_json(const json& j) {
  check_schema_version(j, kCheckpointSchemaVersion, "checkpoint");
  require_keys(j,
               {"schema_version", "mode", "model", "seed", "dataset_fingerprint", "train_seconds",
                "aborted", "last_finite_epoch", "history", "loss_weights"},
               "checkpoint");
  TrainedModel tm;
  tm.mode = train_mode_from_string(j.at("mode").get<std::string>());
  tm.bundle = model_bundle_from_json(j.at("model"));
  tm.seed = j.at("seed").get<std::uint64_t>();
  tm.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  tm.train_seconds = j.at("train_seconds").get<double>();
  tm.aborted = j.at("aborted").get<bool>();
  tm.last_finite_epoch = j.at("last_finite_epoch").get<int>();
  const json& w = j.at("loss_weights");
  for (const auto& r : j.at("history")) {
    require_keys(r, {"epoch", "l_data", "l_physics", "l_anchor", "total", "val_data"},
                 "history row");
    EpochRecord rec;
    rec.epoch = r.at("epoch").get<int>();
    rec.loss.l_data = r.at("l_data").get<double>();
    rec.loss.l_physics = r.at("l_physics").get<double>();
    rec.loss.l_anchor = r.at("l_anchor").get<double>();
    rec.loss.total = r.at("total").get<double>();
    rec.loss.lambda_data = w.at("lambda_data").get<double>();
    rec.loss.lambda_phys = w.at("lambda_phys").get<double>();
    rec.loss.lambda_anchor = w.at("lambda_anchor").get<double>();
    rec.val_data = r.at("val_data").get<double>();
    tm.history.push_back(rec);
  }
  return tm;
}

inline void save_checkpoint(const std::string& path, const TrainedModel& tm) {
  save_json_file(path, trained_model_to_json(tm));
}

inline TrainedModel load_checkpoint(const std::string& path) {
  return trained_model_from_json(load_json_file(path));
}

}  // namespace spinn

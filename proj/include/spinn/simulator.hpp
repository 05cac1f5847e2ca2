#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spinn/csv.hpp"
#include "spinn/json_util.hpp"
#include "spinn/netmodel.hpp"
#include "spinn/rk45.hpp"

namespace spinn {

// Per-machine swing constants, in generator order.
struct MachineConstants {
  Eigen::VectorXd inertia;
  Eigen::VectorXd damping;

  static MachineConstants from_case(const NetworkCase& net) {
    MachineConstants mc;
    const int n = net.n_generators();
    mc.inertia.resize(n);
    mc.damping.resize(n);
    for (int k = 0; k < n; ++k) {
      mc.inertia(k) = net.generators[k].inertia;
      mc.damping(k) = net.generators[k].damping;
    }
    return mc;
  }
};

// Fault scenario: a bolted fault at one bus, applied at t_fault_on and
// self-clearing at t_clear (the cleared topology equals the pre-fault one).
struct FaultSchedule {
  int fault_bus = 0;
  double t_fault_on = 0.0;
  double t_clear = 0.1;
  double t_end = 5.0;

  void validate() const {
    if (!(0.0 <= t_fault_on && t_fault_on < t_clear && t_clear < t_end))
      throw Error("FaultSchedule: require 0 <= t_fault_on < t_clear < t_end");
  }

  Stage stage_at(double t) const {
    if (t < t_fault_on) return Stage::prefault;
    if (t < t_clear) return Stage::fault;
    return Stage::postfault;
  }
};

struct SimConfig {
  double rel_tol = 1e-6;
  double abs_tol = 1e-8;
  double h_init = 1e-3;
  double h_min = 1e-12;
  double h_max = 0.5;
  double record_dt = 0.01;

  OdeOptions ode() const { return {rel_tol, abs_tol, h_init, h_min, h_max}; }

  void validate() const {
    ode().validate();
    if (record_dt <= 0) throw Error("SimConfig: record_dt must be positive");
  }
};

// Recorded trajectory of the state x = [delta; omega] (2n columns).
struct Trajectory {
  int oc_id = 0;
  std::vector<double> times;
  Eigen::MatrixXd states;
  Eigen::MatrixXd derivs;  // interpolant time-derivatives; may be empty
  int clear_index = -1;    // first sample at or after the clearing time (-1: none)

  int n_machines() const { return static_cast<int>(states.cols()) / 2; }
};

// Swing-equation right-hand side for one stage:
//   d delta_k / dt = omega_k
//   d omega_k / dt = (-d_k omega_k - P_elec,k(delta) + P_mech,k) / m_k
class SwingRhs {
 public:
  SwingRhs(const ReducedModel& rm, const MachineConstants& mc)
      : rm_(&rm), mc_(&mc), v_(rm.n()), i_(rm.n()) {}

  void operator()(double /*t*/, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
    const int n = rm_->n();
    dx.resize(2 * n);
    for (int k = 0; k < n; ++k) v_(k) = std::polar(rm_->v0_mag(k), x(k));
    i_.noalias() = rm_->y_reduced * v_;
    for (int k = 0; k < n; ++k) {
      const double p_elec = (std::conj(i_(k)) * v_(k)).real();
      const double omega = x(n + k);
      dx(k) = omega;
      dx(n + k) =
          (-mc_->damping(k) * omega - p_elec + rm_->p_mech(k)) / mc_->inertia(k);
    }
  }

 private:
  const ReducedModel* rm_;
  const MachineConstants* mc_;
  Eigen::VectorXcd v_, i_;
};

inline void swing_rhs(const ReducedModel& rm, const MachineConstants& mc,
                      const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
  SwingRhs f(rm, mc);
  f(0.0, x, dx);
}

// Equidistant recording grid 0, dt, ..., t_end (inclusive).
inline std::vector<double> record_grid(double t_end, double dt) {
  const int count = static_cast<int>(std::lround(t_end / dt)) + 1;
  std::vector<double> times(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) times[static_cast<std::size_t>(i)] = i * dt;
  times.back() = std::min(times.back(), t_end);
  return times;
}

namespace detail {

// Integrate one stage interval, emitting samples that fall inside it.
template <typename Rhs>
inline Eigen::VectorXd run_interval(Rhs&& rhs, const Eigen::VectorXd& x0, double a, double b,
                                    const OdeOptions& opt, std::span<const double> all_times,
                                    std::size_t lo, std::size_t hi, Trajectory& out,
                                    bool want_derivs) {
  const std::span<const double> slice = all_times.subspan(lo, hi - lo);
  OdeResult r = integrate_adaptive(rhs, x0, a, b, opt, slice, want_derivs);
  if (hi > lo) {
    out.states.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) =
        r.states;
    if (want_derivs)
      out.derivs.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) =
          r.derivs;
  }
  return r.x_end;
}

}  // namespace detail

// Simulate the fault scenario for one operating condition, sampling the
// dense output at the given times (sorted, within [0, t_end]).  Stage
// boundaries assign a time t to the stage active on [t, t+);  the recorded
// state sequence is continuous across switches by construction.
inline Trajectory simulate_fault_case_at(const NetworkCase& net, const OperatingCondition& oc,
                                         const FaultSchedule& fs, const SimConfig& cfg,
                                         std::vector<double> times, bool want_derivs = false) {
  fs.validate();
  cfg.validate();
  if (!std::is_sorted(times.begin(), times.end()))
    throw Error("simulate_fault_case: sample times must be sorted");
  if (!times.empty() && (times.front() < 0.0 || times.back() > fs.t_end + 1e-12))
    throw Error("simulate_fault_case: sample times outside [0, t_end]");

  const PowerFlowSolution pf = solve_power_flow(net, oc);
  const ReducedModel rm_pre = init_prefault(net, oc, pf);
  ReducedModel rm_fault = rm_pre, rm_post = rm_pre;
  {
    const AdmittanceMatrix y_fault =
        build_admittance(net, oc, StageSpec::fault(fs.fault_bus), &pf);
    std::vector<int> internal(net.n_generators());
    for (int k = 0; k < net.n_generators(); ++k) internal[k] = net.n_buses() + k;
    rm_fault.y_reduced = kron_reduce(y_fault, internal);
    rm_fault.stage = Stage::fault;
    rm_post.stage = Stage::postfault;  // cleared topology equals pre-fault
  }
  const MachineConstants mc = MachineConstants::from_case(net);

  const int n = net.n_generators();
  Eigen::VectorXd x(2 * n);
  x.head(n) = rm_pre.delta0;
  x.tail(n).setZero();

  Trajectory out;
  out.oc_id = oc.id;
  out.times = times;
  out.states.resize(static_cast<Eigen::Index>(times.size()), 2 * n);
  if (want_derivs) out.derivs.resize(static_cast<Eigen::Index>(times.size()), 2 * n);

  // Partition sample times over the stage intervals [0,t_on), [t_on,t_clear),
  // [t_clear,t_end]; each interval also emits its left endpoint.
  auto lower = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), v) -
                                    times.begin());
  };
  const std::size_t i_on = lower(fs.t_fault_on), i_clear = lower(fs.t_clear);
  const std::span<const double> all(times);

  if (fs.t_fault_on > 0.0) {
    SwingRhs rhs(rm_pre, mc);
    x = detail::run_interval(rhs, x, 0.0, fs.t_fault_on, cfg.ode(), all, 0, i_on, out,
                             want_derivs);
  }
  {
    SwingRhs rhs(rm_fault, mc);
    x = detail::run_interval(rhs, x, fs.t_fault_on, fs.t_clear, cfg.ode(), all, i_on, i_clear,
                             out, want_derivs);
  }
  {
    // Integrate only as far as the last requested sample.
    const double t_post_end =
        times.empty() ? fs.t_clear : std::max(times.back(), fs.t_clear);
    SwingRhs rhs(rm_post, mc);
    x = detail::run_interval(rhs, x, fs.t_clear, t_post_end, cfg.ode(), all, i_clear,
                             times.size(), out, want_derivs);
  }
  out.clear_index = (i_clear < times.size()) ? static_cast<int>(i_clear) : -1;
  return out;
}

// Standard production entry point: equidistant recording grid.
inline Trajectory simulate_fault_case(const NetworkCase& net, const OperatingCondition& oc,
                                      const FaultSchedule& fs, const SimConfig& cfg,
                                      bool want_derivs = false) {
  return simulate_fault_case_at(net, oc, fs, cfg, record_grid(fs.t_end, cfg.record_dt),
                                want_derivs);
}

// No-fault variant: integrate the pre-fault model from its equilibrium.
// Exposed for testing (the state should hold the equilibrium).
inline Trajectory simulate_nofault(const NetworkCase& net, const OperatingCondition& oc,
                                   double t_end, const SimConfig& cfg) {
  cfg.validate();
  const PowerFlowSolution pf = solve_power_flow(net, oc);
  const ReducedModel rm = init_prefault(net, oc, pf);
  const MachineConstants mc = MachineConstants::from_case(net);
  const int n = rm.n();
  Eigen::VectorXd x(2 * n);
  x.head(n) = rm.delta0;
  x.tail(n).setZero();

  Trajectory out;
  out.oc_id = oc.id;
  out.times = record_grid(t_end, cfg.record_dt);
  out.states.resize(static_cast<Eigen::Index>(out.times.size()), 2 * n);
  SwingRhs rhs(rm, mc);
  OdeResult r = integrate_adaptive(rhs, x, 0.0, t_end, cfg.ode(), out.times, false);
  out.states = r.states;
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory serialization
// ---------------------------------------------------------------------------

inline constexpr int kTrajectorySchemaVersion = 1;

inline json trajectory_to_json(const Trajectory& tr) {
  json j;
  j["schema_version"] = kTrajectorySchemaVersion;
  j["oc_id"] = tr.oc_id;
  j["clear_index"] = tr.clear_index;
  j["times"] = tr.times;
  json rows = json::array();
  for (Eigen::Index r = 0; r < tr.states.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < tr.states.cols(); ++c) row.push_back(tr.states(r, c));
    rows.push_back(std::move(row));
  }
  j["states"] = std::move(rows);
  return j;
}

inline Trajectory trajectory_from_json(const json& j) {
  check_schema_version(j, kTrajectorySchemaVersion, "trajectory");
  require_keys(j, {"schema_version", "oc_id", "clear_index", "times", "states"}, "trajectory");
  Trajectory tr;
  tr.oc_id = j.at("oc_id").get<int>();
  tr.clear_index = j.at("clear_index").get<int>();
  tr.times = j.at("times").get<std::vector<double>>();
  const auto& rows = j.at("states");
  if (rows.size() != tr.times.size()) throw Error("trajectory: times/states size mismatch");
  if (!rows.empty()) {
    const std::size_t cols = rows[0].size();
    tr.states.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw Error("trajectory: ragged state rows");
      for (std::size_t c = 0; c < cols; ++c)
        tr.states(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            rows[r][c].get<double>();
    }
  }
  return tr;
}

inline void save_trajectory(const std::string& path, const Trajectory& tr) {
  save_json_file(path, trajectory_to_json(tr));
}

inline Trajectory load_trajectory(const std::string& path) {
  return trajectory_from_json(load_json_file(path));
}

// Config blocks as they appear inside experiment/CLI config files.
inline json fault_schedule_to_json(const FaultSchedule& fs) {
  return json{{"fault_bus", fs.fault_bus},
              {"t_fault_on", fs.t_fault_on},
              {"t_clear", fs.t_clear},
              {"t_end", fs.t_end}};
}

inline FaultSchedule fault_schedule_from_json(const json& j) {
  require_keys(j, {"fault_bus", "t_fault_on", "t_clear", "t_end"}, "fault schedule");
  FaultSchedule fs;
  if (j.contains("fault_bus")) fs.fault_bus = j.at("fault_bus").get<int>();
  if (j.contains("t_fault_on")) fs.t_fault_on = j.at("t_fault_on").get<double>();
  if (j.contains("t_clear")) fs.t_clear = j.at("t_clear").get<double>();
  if (j.contains("t_end")) fs.t_end = j.at("t_end").get<double>();
  fs.validate();
  return fs;
}

inline json sim_config_to_json(const SimConfig& c) {
  return json{{"rel_tol", c.rel_tol},   {"abs_tol", c.abs_tol}, {"h_init", c.h_init},
              {"h_min", c.h_min},       {"h_max", c.h_max},     {"record_dt", c.record_dt}};
}

inline SimConfig sim_config_from_json(const json& j) {
  require_keys(j, {"rel_tol", "abs_tol", "h_init", "h_min", "h_max", "record_dt"},
               "simulation config");
  SimConfig c;
  if (j.contains("rel_tol")) c.rel_tol = j.at("rel_tol").get<double>();
  if (j.contains("abs_tol")) c.abs_tol = j.at("abs_tol").get<double>();
  if (j.contains("h_init")) c.h_init = j.at("h_init").get<double>();
  if (j.contains("h_min")) c.h_min = j.at("h_min").get<double>();
  if (j.contains("h_max")) c.h_max = j.at("h_max").get<double>();
  if (j.contains("record_dt")) c.record_dt = j.at("record_dt").get<double>();
  c.validate();
  return c;
}

// CSV export: t, delta_1..n, omega_1..n.
inline void write_trajectory_csv(const std::string& path, const Trajectory& tr) {
  const int n = tr.n_machines();
  std::vector<std::string> header{"t"};
  for (int k = 1; k <= n; ++k) header.push_back("delta_" + std::to_string(k));
  for (int k = 1; k <= n; ++k) header.push_back("omega_" + std::to_string(k));
  CsvWriter w(path, header);
  for (std::size_t r = 0; r < tr.times.size(); ++r) {
    std::vector<CsvWriter::Cell> cells;
    cells.emplace_back(tr.times[r]);
    for (Eigen::Index c = 0; c < tr.states.cols(); ++c)
      cells.emplace_back(tr.states(static_cast<Eigen::Index>(r), c));
    w.row(cells);
  }
}

}  // namespace spinn

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <string>
#include <vector>

#include "spinn/errors.hpp"

namespace spinn {

using Complex = std::complex<double>;

enum class BusKind { slack, pv, pq };

struct BusSpec {
  int id = 0;
  BusKind kind = BusKind::pq;
  double voltage_setpoint = 1.0;  // p.u., used for slack and pv buses
  Complex shunt{0.0, 0.0};        // fixed bus shunt admittance, p.u.
};

struct BranchSpec {
  int from_bus = 0;
  int to_bus = 0;
  Complex series_impedance{0.0, 0.0};  // p.u.
  double total_charging = 0.0;         // total line charging susceptance, p.u.
};

struct GeneratorSpec {
  int bus = 0;
  double inertia = 0.0;             // coefficient m_k multiplying domega/dt, p.u.*s^2
  double damping = 0.0;             // d_k, p.u.*s
  double transient_reactance = 0.0; // x'_d, p.u.
  double p_set = 0.0;               // active power setpoint, p.u. (pv buses)
};

// A transmission network in per-unit: buses, branches, classical-model
// generators and the set of buses that carry (variable) loads.
struct NetworkCase {
  double base_mva = 100.0;
  std::vector<BusSpec> buses;
  std::vector<BranchSpec> branches;
  std::vector<GeneratorSpec> generators;
  std::vector<int> load_buses;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_generators() const { return static_cast<int>(generators.size()); }
  int n_loads() const { return static_cast<int>(load_buses.size()); }

  void validate() const {
    const int m = n_buses();
    const int n = n_generators();
    if (m < 2) throw Error("NetworkCase: need at least two buses");
    if (n < 1) throw Error("NetworkCase: need at least one generator");
    if (n >= m) throw Error("NetworkCase: generator count must be below bus count");
    int slack_count = 0;
    for (int i = 0; i < m; ++i) {
      if (buses[i].id != i) throw Error("NetworkCase: bus ids must be dense 0..m-1, in order");
      if (buses[i].kind == BusKind::slack) ++slack_count;
    }
    if (slack_count != 1) throw Error("NetworkCase: exactly one slack bus required");
    for (const auto& br : branches) {
      if (br.from_bus < 0 || br.from_bus >= m || br.to_bus < 0 || br.to_bus >= m)
        throw Error("NetworkCase: branch references unknown bus");
      if (br.from_bus == br.to_bus) throw Error("NetworkCase: branch endpoints must differ");
      if (br.series_impedance == Complex(0.0, 0.0))
        throw Error("NetworkCase: branch series impedance must be nonzero");
    }
    std::vector<bool> has_gen(m, false);
    for (const auto& g : generators) {
      if (g.bus < 0 || g.bus >= m) throw Error("NetworkCase: generator references unknown bus");
      if (has_gen[g.bus]) throw Error("NetworkCase: at most one generator per bus");
      has_gen[g.bus] = true;
      if (g.inertia <= 0.0) throw Error("NetworkCase: generator inertia must be positive");
      if (g.damping < 0.0) throw Error("NetworkCase: generator damping must be non-negative");
      if (g.transient_reactance <= 0.0)
        throw Error("NetworkCase: generator transient reactance must be positive");
      if (buses[g.bus].kind == BusKind::pq)
        throw Error("NetworkCase: generator buses must be slack or pv");
    }
    for (int i = 0; i < m; ++i)
      if ((buses[i].kind != BusKind::pq) && !has_gen[i])
        throw Error("NetworkCase: slack/pv bus without generator");
    std::vector<bool> seen_load(m, false);
    for (int b : load_buses) {
      if (b < 0 || b >= m) throw Error("NetworkCase: load bus out of range");
      if (seen_load[b]) throw Error("NetworkCase: duplicate load bus");
      seen_load[b] = true;
    }
  }
};

// One operating condition: complex power consumed at each load bus,
// aligned with NetworkCase::load_buses.
struct OperatingCondition {
  int id = 0;
  std::vector<Complex> loads;  // P + jQ consumed, p.u.
};

enum class Stage { prefault, fault, postfault };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::prefault: return "prefault";
    case Stage::fault: return "fault";
    default: return "postfault";
  }
}

// Stage selector for admittance assembly.  The fault stage grounds one bus
// (its row/column is removed); the cleared topology equals the pre-fault one.
struct StageSpec {
  Stage stage = Stage::prefault;
  int fault_bus = -1;  // required for Stage::fault

  static StageSpec prefault() { return {Stage::prefault, -1}; }
  static StageSpec fault(int bus) { return {Stage::fault, bus}; }
  static StageSpec postfault() { return {Stage::postfault, -1}; }
};

// Symmetric complex nodal admittance matrix with node labels.  Physical buses
// keep their bus ids; generator internal nodes are labelled m..m+n-1 in
// generator order.
struct AdmittanceMatrix {
  Eigen::MatrixXcd entries;
  std::vector<int> node_labels;

  int order() const { return static_cast<int>(entries.rows()); }

  int index_of(int label) const {
    for (std::size_t i = 0; i < node_labels.size(); ++i)
      if (node_labels[i] == label) return static_cast<int>(i);
    throw Error("AdmittanceMatrix: unknown node label " + std::to_string(label));
  }
};

struct PowerFlowSolution {
  Eigen::VectorXcd voltages;  // per bus, p.u.
  int iterations = 0;
  double mismatch_norm = 0.0;  // max-abs mismatch at the returned voltages
};

// Reduced generator-only model: admittance over internal nodes, constant
// internal voltage magnitudes, equilibrium angles and mechanical powers.
struct ReducedModel {
  Stage stage = Stage::prefault;
  Eigen::MatrixXcd y_reduced;  // n x n, generator order
  Eigen::VectorXd v0_mag;      // |E'_k|
  Eigen::VectorXd delta0;      // equilibrium rotor angles, rad
  Eigen::VectorXd p_mech;      // constant mechanical powers, p.u.

  int n() const { return static_cast<int>(y_reduced.rows()); }
};

// ---------------------------------------------------------------------------
// Admittance assembly
// ---------------------------------------------------------------------------

// Physical-bus admittance matrix: branches (pi model) and fixed bus shunts.
// Loads and generator internal nodes are added separately.
inline Eigen::MatrixXcd assemble_physical_y(const NetworkCase& net) {
  const int m = net.n_buses();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(m, m);
  for (const auto& br : net.branches) {
    const Complex ys = 1.0 / br.series_impedance;
    const Complex half_charge(0.0, br.total_charging / 2.0);
    y(br.from_bus, br.from_bus) += ys + half_charge;
    y(br.to_bus, br.to_bus) += ys + half_charge;
    y(br.from_bus, br.to_bus) -= ys;
    y(br.to_bus, br.from_bus) -= ys;
  }
  for (const auto& bus : net.buses) y(bus.id, bus.id) += bus.shunt;
  return y;
}

// Full stage admittance matrix including constant-admittance loads and
// generator internal nodes behind transient reactances.
//
// Loads are converted to shunts (P - jQ) / |V|^2 at the supplied power-flow
// voltages, so `pf` is required whenever the case has load buses.  For the
// fault stage the grounded bus is removed from the matrix entirely.
inline AdmittanceMatrix build_admittance(const NetworkCase& net, const OperatingCondition& oc,
                                         const StageSpec& stage,
                                         const PowerFlowSolution* pf = nullptr) {
  net.validate();
  const int m = net.n_buses();
  const int n = net.n_generators();
  if (static_cast<int>(oc.loads.size()) != net.n_loads())
    throw Error("build_admittance: operating condition load count mismatch");
  if (stage.stage == Stage::fault) {
    if (stage.fault_bus < 0 || stage.fault_bus >= m + n)
      throw Error("build_admittance: unknown fault bus " + std::to_string(stage.fault_bus));
    if (stage.fault_bus >= m)
      throw Error("build_admittance: fault bus is a generator internal node");
  }
  if (net.n_loads() > 0 && pf == nullptr)
    throw Error("build_admittance: a power-flow solution is required to convert loads");

  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(m + n, m + n);
  y.topLeftCorner(m, m) = assemble_physical_y(net);

  // Loads as constant shunt admittances at their pre-fault voltages.
  for (int i = 0; i < net.n_loads(); ++i) {
    const int b = net.load_buses[i];
    const double vmag2 = std::norm(pf->voltages(b));
    if (vmag2 <= 0.0) throw Error("build_admittance: zero voltage at load bus");
    y(b, b) += std::conj(oc.loads[i]) / vmag2;
  }

  // Generator internal nodes behind x'_d, labelled m..m+n-1.
  for (int k = 0; k < n; ++k) {
    const Complex yg = 1.0 / Complex(0.0, net.generators[k].transient_reactance);
    const int b = net.generators[k].bus;
    const int g = m + k;
    y(b, b) += yg;
    y(g, g) += yg;
    y(b, g) -= yg;
    y(g, b) -= yg;
  }

  AdmittanceMatrix out;
  if (stage.stage == Stage::fault) {
    const int f = stage.fault_bus;
    out.entries.resize(m + n - 1, m + n - 1);
    out.node_labels.reserve(m + n - 1);
    std::vector<int> keep;
    keep.reserve(m + n - 1);
    for (int i = 0; i < m + n; ++i)
      if (i != f) {
        keep.push_back(i);
        out.node_labels.push_back(i);
      }
    for (std::size_t r = 0; r < keep.size(); ++r)
      for (std::size_t c = 0; c < keep.size(); ++c) out.entries(r, c) = y(keep[r], keep[c]);
  } else {
    out.entries = std::move(y);
    out.node_labels.resize(m + n);
    for (int i = 0; i < m + n; ++i) out.node_labels[i] = i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kron reduction
// ---------------------------------------------------------------------------

// Eliminate every node not listed in `keep` (labels) via the Schur complement
//   Y_r = Y_kk - Y_ke Y_ee^{-1} Y_ek.
// Rows/columns of the result follow the order of `keep`.
inline Eigen::MatrixXcd kron_reduce(const AdmittanceMatrix& y, const std::vector<int>& keep) {
  const int order = y.order();
  std::vector<int> keep_idx;
  keep_idx.reserve(keep.size());
  std::vector<bool> kept(order, false);
  for (int label : keep) {
    const int idx = y.index_of(label);
    if (kept[idx]) throw Error("kron_reduce: duplicate keep label");
    kept[idx] = true;
    keep_idx.push_back(idx);
  }
  std::vector<int> elim_idx;
  for (int i = 0; i < order; ++i)
    if (!kept[i]) elim_idx.push_back(i);

  const int k = static_cast<int>(keep_idx.size());
  const int e = static_cast<int>(elim_idx.size());
  Eigen::MatrixXcd ykk(k, k), yke(k, e), yek(e, k), yee(e, e);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) ykk(r, c) = y.entries(keep_idx[r], keep_idx[c]);
  if (e == 0) return ykk;
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < e; ++c) yke(r, c) = y.entries(keep_idx[r], elim_idx[c]);
  for (int r = 0; r < e; ++r)
    for (int c = 0; c < k; ++c) yek(r, c) = y.entries(elim_idx[r], keep_idx[c]);
  for (int r = 0; r < e; ++r)
    for (int c = 0; c < e; ++c) yee(r, c) = y.entries(elim_idx[r], elim_idx[c]);

  Eigen::FullPivLU<Eigen::MatrixXcd> lu(yee);
  if (!lu.isInvertible())
    throw Error("kron_reduce: eliminated block is singular (isolated subnetwork?)");
  return ykk - yke * lu.solve(yek);
}

// ---------------------------------------------------------------------------
// Power flow (Newton-Raphson, polar form)
// ---------------------------------------------------------------------------

namespace detail {

// Net complex power injected at every bus for voltages v.
inline Eigen::VectorXcd injections(const Eigen::MatrixXcd& y, const Eigen::VectorXcd& v) {
  return v.array() * (y * v).array().conjugate();
}

// Scheduled net injections: generator setpoints minus loads.
inline Eigen::VectorXcd scheduled_injection(const NetworkCase& net, const OperatingCondition& oc) {
  Eigen::VectorXcd s = Eigen::VectorXcd::Zero(net.n_buses());
  for (const auto& g : net.generators) s(g.bus) += Complex(g.p_set, 0.0);
  for (int i = 0; i < net.n_loads(); ++i) s(net.load_buses[i]) -= oc.loads[i];
  return s;
}

}  // namespace detail

// Max-abs power mismatch over the solved equations (P at non-slack buses,
// Q at pq buses).  Exposed so tests can certify a solution independently.
inline double power_mismatch(const NetworkCase& net, const OperatingCondition& oc,
                             const Eigen::VectorXcd& voltages) {
  const Eigen::MatrixXcd y = assemble_physical_y(net);
  const Eigen::VectorXcd s_calc = detail::injections(y, voltages);
  const Eigen::VectorXcd s_spec = detail::scheduled_injection(net, oc);
  double worst = 0.0;
  for (int b = 0; b < net.n_buses(); ++b) {
    if (net.buses[b].kind == BusKind::slack) continue;
    worst = std::max(worst, std::abs(s_spec(b).real() - s_calc(b).real()));
    if (net.buses[b].kind == BusKind::pq)
      worst = std::max(worst, std::abs(s_spec(b).imag() - s_calc(b).imag()));
  }
  return worst;
}

// Newton-Raphson power flow from a flat start (angles zero, magnitudes at
// setpoints where fixed).  Throws PowerFlowDiverged on failure.
inline PowerFlowSolution solve_power_flow(const NetworkCase& net, const OperatingCondition& oc,
                                          double tol = 1e-8, int max_iter = 20) {
  net.validate();
  if (static_cast<int>(oc.loads.size()) != net.n_loads())
    throw Error("solve_power_flow: operating condition load count mismatch");
  const int m = net.n_buses();
  const Eigen::MatrixXcd y = assemble_physical_y(net);
  const Eigen::VectorXcd s_spec = detail::scheduled_injection(net, oc);

  Eigen::VectorXd vm = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(m);
  for (const auto& bus : net.buses)
    if (bus.kind != BusKind::pq) vm(bus.id) = bus.voltage_setpoint;

  std::vector<int> ang_idx, mag_idx;  // unknown angles / magnitudes
  for (const auto& bus : net.buses) {
    if (bus.kind != BusKind::slack) ang_idx.push_back(bus.id);
    if (bus.kind == BusKind::pq) mag_idx.push_back(bus.id);
  }
  const int na = static_cast<int>(ang_idx.size());
  const int nm = static_cast<int>(mag_idx.size());

  auto voltages = [&]() {
    Eigen::VectorXcd v(m);
    for (int b = 0; b < m; ++b) v(b) = std::polar(vm(b), va(b));
    return v;
  };

  PowerFlowSolution sol;
  for (int iter = 0; iter <= max_iter; ++iter) {
    const Eigen::VectorXcd v = voltages();
    const Eigen::VectorXcd s_calc = detail::injections(y, v);

    Eigen::VectorXd mis(na + nm);
    for (int i = 0; i < na; ++i) mis(i) = s_spec(ang_idx[i]).real() - s_calc(ang_idx[i]).real();
    for (int i = 0; i < nm; ++i)
      mis(na + i) = s_spec(mag_idx[i]).imag() - s_calc(mag_idx[i]).imag();
    const double norm = (na + nm) ? mis.cwiseAbs().maxCoeff() : 0.0;
    if (norm < tol) {
      sol.voltages = v;
      sol.iterations = iter;
      sol.mismatch_norm = norm;
      return sol;
    }
    if (iter == max_iter)
      throw PowerFlowDiverged("solve_power_flow: no convergence after " +
                                  std::to_string(max_iter) + " iterations (mismatch " +
                                  std::to_string(norm) + ")",
                              norm, max_iter);

    // Standard polar Jacobian.  dP/dtheta, dP/dV, dQ/dtheta, dQ/dV.
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(na + nm, na + nm);
    const Eigen::VectorXcd yv = y * v;
    auto dS = [&](int i, int j, bool wrt_mag) -> Complex {
      // Derivative of S_i = V_i conj((Y V)_i) w.r.t. angle or magnitude at j.
      const Complex yij = y(i, j);
      const Complex vi = v(i), vj = v(j);
      if (!wrt_mag) {
        Complex d = vi * std::conj(Complex(0, 1) * yij * vj);
        if (i == j) d += Complex(0, 1) * vi * std::conj(yv(i));
        return d;
      }
      Complex d = vi * std::conj(yij * vj / vm(j));
      if (i == j) d += (vi / vm(i)) * std::conj(yv(i));
      return d;
    };
    for (int r = 0; r < na; ++r) {
      for (int c = 0; c < na; ++c) jac(r, c) = dS(ang_idx[r], ang_idx[c], false).real();
      for (int c = 0; c < nm; ++c) jac(r, na + c) = dS(ang_idx[r], mag_idx[c], true).real();
    }
    for (int r = 0; r < nm; ++r) {
      for (int c = 0; c < na; ++c) jac(na + r, c) = dS(mag_idx[r], ang_idx[c], false).imag();
      for (int c = 0; c < nm; ++c) jac(na + r, na + c) = dS(mag_idx[r], mag_idx[c], true).imag();
    }

    const Eigen::VectorXd dx = jac.partialPivLu().solve(mis);
    if (!dx.allFinite())
      throw PowerFlowDiverged("solve_power_flow: singular Jacobian", norm, iter);
    for (int i = 0; i < na; ++i) va(ang_idx[i]) += dx(i);
    for (int i = 0; i < nm; ++i) vm(mag_idx[i]) += dx(na + i);
  }
  throw PowerFlowDiverged("solve_power_flow: unreachable", 0.0, max_iter);  // LCOV_EXCL_LINE
}

// ---------------------------------------------------------------------------
// Classical-model initialisation and electrical power
// ---------------------------------------------------------------------------

// Electrical power at the generator internal nodes:
//   V = v0 .* exp(j delta),  I = Y_r V,  P = Re(conj(I) .* V).
inline Eigen::VectorXd electrical_power(const ReducedModel& rm, const Eigen::VectorXd& delta) {
  const int n = rm.n();
  if (delta.size() != n) throw Error("electrical_power: angle dimension mismatch");
  Eigen::VectorXcd v(n);
  for (int k = 0; k < n; ++k) v(k) = std::polar(rm.v0_mag(k), delta(k));
  const Eigen::VectorXcd i = rm.y_reduced * v;
  return (i.conjugate().array() * v.array()).real();
}

// Jacobian dP/ddelta of electrical_power, n x n.
inline Eigen::MatrixXd electrical_power_jacobian(const ReducedModel& rm,
                                                 const Eigen::VectorXd& delta) {
  const int n = rm.n();
  if (delta.size() != n) throw Error("electrical_power_jacobian: angle dimension mismatch");
  Eigen::MatrixXd jac(n, n);
  for (int k = 0; k < n; ++k) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == k) continue;
      const double a = rm.v0_mag(k) * rm.v0_mag(j) * rm.y_reduced(k, j).real();
      const double b = rm.v0_mag(k) * rm.v0_mag(j) * rm.y_reduced(k, j).imag();
      const double dkj = delta(k) - delta(j);
      // P_k term: a cos(dkj) + b sin(dkj)
      jac(k, j) = a * std::sin(dkj) - b * std::cos(dkj);
      diag += -a * std::sin(dkj) + b * std::cos(dkj);
    }
    jac(k, k) = diag;
  }
  return jac;
}

// Pre-fault reduced model: internal EMFs E' = V + j x'_d I behind the
// transient reactance, Kron reduction onto the internal nodes, and mechanical
// powers set to the pre-fault electrical powers (equilibrium).
inline ReducedModel init_prefault(const NetworkCase& net, const OperatingCondition& oc,
                                  const PowerFlowSolution& pf) {
  net.validate();
  const int m = net.n_buses();
  const int n = net.n_generators();
  if (pf.voltages.size() != m) throw Error("init_prefault: power-flow solution size mismatch");

  // Generator terminal currents: net injection current plus load current
  // (generator and load can share a bus in general).
  const Eigen::MatrixXcd y_phys = assemble_physical_y(net);
  const Eigen::VectorXcd i_net = y_phys * pf.voltages;
  Eigen::VectorXcd i_load = Eigen::VectorXcd::Zero(m);
  for (int i = 0; i < net.n_loads(); ++i) {
    const int b = net.load_buses[i];
    i_load(b) += std::conj(oc.loads[i] / pf.voltages(b));
  }

  ReducedModel rm;
  rm.stage = Stage::prefault;
  rm.v0_mag.resize(n);
  rm.delta0.resize(n);
  for (int k = 0; k < n; ++k) {
    const int b = net.generators[k].bus;
    const Complex i_gen = i_net(b) + i_load(b);
    const Complex e = pf.voltages(b) + Complex(0.0, net.generators[k].transient_reactance) * i_gen;
    rm.v0_mag(k) = std::abs(e);
    rm.delta0(k) = std::arg(e);
  }

  const AdmittanceMatrix y_full = build_admittance(net, oc, StageSpec::prefault(), &pf);
  std::vector<int> internal(n);
  for (int k = 0; k < n; ++k) internal[k] = m + k;
  rm.y_reduced = kron_reduce(y_full, internal);
  rm.p_mech = electrical_power(rm, rm.delta0);
  return rm;
}

// Stage reduced model sharing the pre-fault equilibrium quantities.
inline ReducedModel build_reduced_model(const NetworkCase& net, const OperatingCondition& oc,
                                        const PowerFlowSolution& pf, const StageSpec& stage) {
  ReducedModel rm = init_prefault(net, oc, pf);
  if (stage.stage != Stage::prefault) {
    const AdmittanceMatrix y_full = build_admittance(net, oc, stage, &pf);
    std::vector<int> internal(net.n_generators());
    for (int k = 0; k < net.n_generators(); ++k) internal[k] = net.n_buses() + k;
    rm.y_reduced = kron_reduce(y_full, internal);
    rm.stage = stage.stage;
  }
  return rm;
}

}  // namespace spinn

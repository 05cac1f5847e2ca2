#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "spinn/errors.hpp"
#include "spinn/simulator.hpp"

namespace spinn {

// Time-grid comparisons tolerate this much float noise when matching sample
// times or deciding window membership.
inline constexpr double kTimeTol = 1e-9;

namespace detail {

inline void check_grids_match(const Trajectory& a, const Trajectory& b) {
  if (a.times.size() != b.times.size())
    throw Error("trajectory comparison: different sample counts");
  if (a.states.cols() != b.states.cols())
    throw Error("trajectory comparison: different state dimensions");
  for (std::size_t i = 0; i < a.times.size(); ++i)
    if (std::abs(a.times[i] - b.times[i]) > kTimeTol)
      throw Error("trajectory comparison: time grids differ at index " + std::to_string(i));
}

inline bool in_window(double t, double t_lo, double t_hi, bool include_lo) {
  if (t > t_hi + kTimeTol) return false;
  return include_lo ? t >= t_lo - kTimeTol : t > t_lo + kTimeTol;
}

}  // namespace detail

// Relative MSE of the rotor-angle predictions over a time window, as a
// percentage: 100 * sum((angle_pred - angle_true)^2) / sum(angle_true^2),
// summed over machines and window samples.  `include_lo` selects a closed or
// half-open lower window edge (extrapolation windows exclude the boundary).
inline double relative_mse_percent(const Trajectory& pred, const Trajectory& truth, double t_lo,
                                   double t_hi, bool include_lo = true) {
  detail::check_grids_match(pred, truth);
  const int n = truth.n_machines();
  double num = 0.0, den = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < truth.times.size(); ++i) {
    if (!detail::in_window(truth.times[i], t_lo, t_hi, include_lo)) continue;
    any = true;
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    for (int k = 0; k < n; ++k) {
      const double d = pred.states(r, k) - truth.states(r, k);
      num += d * d;
      den += truth.states(r, k) * truth.states(r, k);
    }
  }
  if (!any) throw Error("relative_mse_percent: window contains no samples");
  if (den <= 0.0) throw Error("relative_mse_percent: degenerate truth (zero angle energy)");
  return 100.0 * num / den;
}

// Absolute mean-square error of the speed predictions over a window
// (physical units, rad/s squared) — co-reported because the relative-MSE
// normalization is a convention.
inline double omega_mse(const Trajectory& pred, const Trajectory& truth, double t_lo, double t_hi,
                        bool include_lo = true) {
  detail::check_grids_match(pred, truth);
  const int n = truth.n_machines();
  double num = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < truth.times.size(); ++i) {
    if (!detail::in_window(truth.times[i], t_lo, t_hi, include_lo)) continue;
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    for (int k = 0; k < n; ++k) {
      const double d = pred.states(r, n + k) - truth.states(r, n + k);
      num += d * d;
      ++count;
    }
  }
  if (count == 0) throw Error("omega_mse: window contains no samples");
  return num / static_cast<double>(count);
}

// Per-time-bin relative angle MSE pooled over a set of trajectory pairs.
// Bin i covers [i*w, (i+1)*w), the final bin closes at t_end.
inline std::vector<double> binned_relative_mse(const std::vector<Trajectory>& pred,
                                               const std::vector<Trajectory>& truth,
                                               double bin_width, double t_end) {
  if (pred.size() != truth.size()) throw Error("binned_relative_mse: list size mismatch");
  if (bin_width <= 0 || t_end <= 0) throw Error("binned_relative_mse: invalid binning");
  const int n_bins = std::max(1, static_cast<int>(std::ceil(t_end / bin_width - kTimeTol)));
  std::vector<double> num(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> den(static_cast<std::size_t>(n_bins), 0.0);
  for (std::size_t p = 0; p < pred.size(); ++p) {
    detail::check_grids_match(pred[p], truth[p]);
    const int n = truth[p].n_machines();
    for (std::size_t i = 0; i < truth[p].times.size(); ++i) {
      const double t = truth[p].times[i];
      if (t > t_end + kTimeTol) continue;
      int bin = static_cast<int>(std::floor((t + kTimeTol) / bin_width));
      bin = std::min(bin, n_bins - 1);
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      for (int k = 0; k < n; ++k) {
        const double d = pred[p].states(r, k) - truth[p].states(r, k);
        num[static_cast<std::size_t>(bin)] += d * d;
        den[static_cast<std::size_t>(bin)] += truth[p].states(r, k) * truth[p].states(r, k);
      }
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n_bins));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (den[i] <= 0.0) throw Error("binned_relative_mse: degenerate truth in bin " +
                                   std::to_string(i));
    out[i] = 100.0 * num[i] / den[i];
  }
  return out;
}

// Evaluation summary over a set of test operating conditions:
// interpolation window [0, t_interp], extrapolation window (t_interp,
// t_extrap], full window [0, t_extrap], plus a pooled per-bin error curve.
struct OcEval {
  int oc_id = 0;
  double interp_pct = 0.0;
  double extrap_pct = 0.0;
  double full_pct = 0.0;
  double omega_interp_mse = 0.0;
  double omega_extrap_mse = 0.0;
};

struct EvalReport {
  double t_interp = 0.0;
  double t_extrap = 0.0;
  double bin_width = 0.5;
  std::vector<OcEval> per_oc;
  double interp_pct_mean = 0.0;
  double extrap_pct_mean = 0.0;
  double full_pct_mean = 0.0;
  std::vector<double> bin_err_pct;
};

inline EvalReport evaluate_predictions(const std::vector<Trajectory>& pred,
                                       const std::vector<Trajectory>& truth, double t_interp,
                                       double t_extrap, double bin_width = 0.5) {
  if (pred.size() != truth.size() || pred.empty())
    throw Error("evaluate_predictions: need matching non-empty trajectory lists");
  if (!(t_interp > 0) || !(t_extrap > t_interp))
    throw Error("evaluate_predictions: need 0 < t_interp < t_extrap");
  EvalReport rep;
  rep.t_interp = t_interp;
  rep.t_extrap = t_extrap;
  rep.bin_width = bin_width;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    OcEval e;
    e.oc_id = truth[i].oc_id;
    e.interp_pct = relative_mse_percent(pred[i], truth[i], 0.0, t_interp);
    e.extrap_pct = relative_mse_percent(pred[i], truth[i], t_interp, t_extrap, false);
    e.full_pct = relative_mse_percent(pred[i], truth[i], 0.0, t_extrap);
    e.omega_interp_mse = omega_mse(pred[i], truth[i], 0.0, t_interp);
    e.omega_extrap_mse = omega_mse(pred[i], truth[i], t_interp, t_extrap, false);
    rep.per_oc.push_back(e);
    rep.interp_pct_mean += e.interp_pct;
    rep.extrap_pct_mean += e.extrap_pct;
    rep.full_pct_mean += e.full_pct;
  }
  const double cnt = static_cast<double>(rep.per_oc.size());
  rep.interp_pct_mean /= cnt;
  rep.extrap_pct_mean /= cnt;
  rep.full_pct_mean /= cnt;
  rep.bin_err_pct = binned_relative_mse(pred, truth, bin_width, t_extrap);
  return rep;
}

}  // namespace spinn

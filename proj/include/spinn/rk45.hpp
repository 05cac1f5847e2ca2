#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "spinn/errors.hpp"

namespace spinn {

// Dormand-Prince 5(4) with PI step-size control and a C1 quartic continuous
// extension (dense output).  The first-same-as-last property is exploited:
// the seventh stage of an accepted step seeds the next step.

namespace dopri5 {

// Nodes.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
// Stage coefficients.
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
// Fifth-order solution weights (also the a7j row).
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// Embedded error weights (fifth minus fourth order).
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Dense-output weights for the quartic continuous extension.
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

}  // namespace dopri5

struct OdeOptions {
  double rel_tol = 1e-6;
  double abs_tol = 1e-8;
  double h_init = 1e-3;
  double h_min = 1e-12;
  double h_max = 0.5;

  void validate() const {
    if (rel_tol <= 0 || abs_tol <= 0 || h_init <= 0 || h_min <= 0 || h_max <= 0)
      throw Error("OdeOptions: tolerances and step bounds must be positive");
    if (h_min > h_init || h_init > h_max)
      throw Error("OdeOptions: require h_min <= h_init <= h_max");
  }
};

struct OdeResult {
  Eigen::VectorXd x_end;
  Eigen::MatrixXd states;  // one row per requested sample time
  Eigen::MatrixXd derivs;  // matching interpolant time-derivatives (optional)
  long steps_accepted = 0;
  long steps_rejected = 0;
};

// Quartic continuous extension over one accepted step, Horner-nested in the
// normalised coordinate theta in [0, 1].  The extension is C1: its derivative
// equals the ODE right-hand side at both step ends.
struct DenseSegment {
  Eigen::VectorXd c1, c2, c3, c4, c5;
  double t0 = 0.0, h = 0.0;

  void build(const Eigen::VectorXd& y, const Eigen::VectorXd& ynew, double t, double step,
             const Eigen::VectorXd& k1, const Eigen::VectorXd& k3, const Eigen::VectorXd& k4,
             const Eigen::VectorXd& k5, const Eigen::VectorXd& k6, const Eigen::VectorXd& k7) {
    using namespace dopri5;
    t0 = t;
    h = step;
    c1 = y;
    c2 = ynew - y;
    c3 = step * k1 - c2;
    c4 = c2 - step * k7 - c3;
    c5 = step * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
  }

  Eigen::VectorXd state(double t) const {
    const double th = (t - t0) / h;
    const double th1 = 1.0 - th;
    return c1 + th * (c2 + th1 * (c3 + th * (c4 + th1 * c5)));
  }

  Eigen::VectorXd derivative(double t) const {
    const double th = (t - t0) / h;
    return (c2 + (1.0 - 2.0 * th) * c3 + th * (2.0 - 3.0 * th) * c4 +
            2.0 * th * (1.0 - th) * (1.0 - 2.0 * th) * c5) /
           h;
  }
};

// Integrate x' = rhs(t, x) from t0 to t1, writing dense-output samples at the
// (sorted, within [t0, t1]) requested times.  Throws StepUnderflow if the
// controller cannot proceed at h >= h_min.
template <typename Rhs>
OdeResult integrate_adaptive(Rhs&& rhs, const Eigen::VectorXd& x0, double t0, double t1,
                             const OdeOptions& opt, std::span<const double> sample_times = {},
                             bool want_derivs = false) {
  using namespace dopri5;
  opt.validate();
  if (t1 < t0) throw Error("integrate_adaptive: t1 must be >= t0");
  const Eigen::Index dim = x0.size();

  OdeResult res;
  res.states.resize(static_cast<Eigen::Index>(sample_times.size()), dim);
  if (want_derivs) res.derivs.resize(static_cast<Eigen::Index>(sample_times.size()), dim);

  Eigen::VectorXd y = x0, ynew(dim), yerr(dim), ytmp(dim);
  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
  std::size_t next_sample = 0;

  // Samples at exactly t0 use the initial state and its right-derivative.
  rhs(t0, y, k1);
  while (next_sample < sample_times.size() && sample_times[next_sample] <= t0) {
    res.states.row(next_sample) = y.transpose();
    if (want_derivs) res.derivs.row(next_sample) = k1.transpose();
    ++next_sample;
  }
  if (t1 == t0) {
    res.x_end = y;
    return res;
  }

  double t = t0;
  double h = std::min(opt.h_init, t1 - t0);
  double err_old = 1e-4;
  const double safety = 0.9, expo1 = 0.17, beta = 0.04;
  const double t_eps = 1e-14 * std::max({1.0, std::abs(t0), std::abs(t1)});
  DenseSegment seg;

  while (t1 - t > t_eps) {
    if (t + h >= t1) h = t1 - t;

    // Stages (k1 is fresh from initialisation or the previous step's k7).
    ytmp = y + h * (a21 * k1);
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ytmp, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + h, ynew, k7);
    yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err;
    if (!ynew.allFinite() || !yerr.allFinite()) {
      err = 10.0;  // force rejection and shrink
    } else {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < dim; ++i) {
        const double scale = opt.abs_tol + opt.rel_tol * std::max(std::abs(y(i)), std::abs(ynew(i)));
        const double q = yerr(i) / scale;
        acc += q * q;
      }
      err = std::sqrt(acc / static_cast<double>(dim));
    }

    if (err <= 1.0) {
      ++res.steps_accepted;
      // Emit dense-output samples inside (t, t+h].
      if (next_sample < sample_times.size() && sample_times[next_sample] <= t + h) {
        seg.build(y, ynew, t, h, k1, k3, k4, k5, k6, k7);
        while (next_sample < sample_times.size() && sample_times[next_sample] <= t + h) {
          const double ts = sample_times[next_sample];
          res.states.row(next_sample) = seg.state(ts).transpose();
          if (want_derivs) res.derivs.row(next_sample) = seg.derivative(ts).transpose();
          ++next_sample;
        }
      }
      t += h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      // PI controller (accepted step).
      const double err_clip = std::max(err, 1e-10);
      double fac = safety * std::pow(err_clip, -expo1) * std::pow(err_old, beta);
      fac = std::clamp(fac, 0.2, 5.0);
      h = std::min(h * fac, opt.h_max);
      err_old = std::max(err, 1e-4);
    } else {
      ++res.steps_rejected;
      double fac = safety * std::pow(err, -0.2);
      fac = std::clamp(fac, 0.1, 1.0);
      h *= fac;
    }
    if (h < opt.h_min && t1 - t > t_eps)
      throw StepUnderflow("integrate_adaptive: step size underflow at t = " + std::to_string(t), t);
  }

  // Any trailing samples at exactly t1 (within round-off of the loop above).
  while (next_sample < sample_times.size()) {
    res.states.row(next_sample) = y.transpose();
    if (want_derivs) {
      rhs(t1, y, k2);
      res.derivs.row(next_sample) = k2.transpose();
    }
    ++next_sample;
  }
  res.x_end = std::move(y);
  return res;
}

// Fixed-step variant with error control disabled; used for convergence-order
// measurements.
template <typename Rhs>
Eigen::VectorXd integrate_fixed(Rhs&& rhs, const Eigen::VectorXd& x0, double t0, double t1,
                                double h) {
  using namespace dopri5;
  if (h <= 0) throw Error("integrate_fixed: step must be positive");
  const Eigen::Index dim = x0.size();
  Eigen::VectorXd y = x0, ytmp(dim);
  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim);
  double t = t0;
  while (t < t1 - 1e-14 * std::max(1.0, std::abs(t1))) {
    const double step = std::min(h, t1 - t);
    rhs(t, y, k1);
    ytmp = y + step * (a21 * k1);
    rhs(t + c2 * step, ytmp, k2);
    ytmp = y + step * (a31 * k1 + a32 * k2);
    rhs(t + c3 * step, ytmp, k3);
    ytmp = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * step, ytmp, k4);
    ytmp = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * step, ytmp, k5);
    ytmp = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + step, ytmp, k6);
    y += step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    t += step;
  }
  return y;
}

}  // namespace spinn

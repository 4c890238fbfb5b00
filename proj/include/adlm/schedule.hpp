#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace adlm {

class schedule_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Uniform discretization of [0, 1]: step i in 1..T covers (s(i), t(i)].
struct TimeGrid {
  int steps = 128;

  double t(int i) const { return static_cast<double>(i) / steps; }
  double s(int i) const { return static_cast<double>(i - 1) / steps; }

  // Index of the step whose interval contains time x.
  int enclosing_step(double x) const {
    int i = static_cast<int>(std::ceil(x * steps));
    return std::clamp(i, 1, steps);
  }
};

// Masking level: 1 at time 0 (clean), 0 at time 1 (fully masked).
inline double alpha_linear(double t) {
  if (t < 0.0 || t > 1.0) throw schedule_error("time outside [0,1]");
  return 1.0 - t;
}

struct RemaskWindow {
  double t_on = 0.55;
  double t_off = 0.05;
  double eta = 0.02;
  double alpha_on = 0.9;  // recorded for fidelity with the published config
};

enum class ScheduleKind { Linear, ZeroRemask, LoopRemask };

// Remasking level at time t: zero outside [t_off, t_on]; inside, a fraction
// eta of the largest value the masked-case posterior coefficients admit at
// the enclosing grid step.
inline double sigma_loop(double t, const RemaskWindow& w, const TimeGrid& grid) {
  if (!(0.0 <= w.t_off && w.t_off < w.t_on && w.t_on <= 1.0))
    throw schedule_error("remask window requires 0 <= t_off < t_on <= 1");
  if (t < w.t_off || t > w.t_on) return 0.0;
  const int i = grid.enclosing_step(t);
  const double alpha_t = alpha_linear(grid.t(i));
  const double alpha_s = alpha_linear(grid.s(i));
  if (alpha_t <= 0.0) return 0.0;
  const double cap = (1.0 - alpha_s) / alpha_t;
  return std::min({w.eta * cap, cap, 1.0});
}

class NoiseSchedule {
 public:
  static NoiseSchedule linear() { return NoiseSchedule(ScheduleKind::Linear, {}); }
  static NoiseSchedule zero_remask() {
    return NoiseSchedule(ScheduleKind::ZeroRemask, {});
  }
  static NoiseSchedule loop_remask(RemaskWindow w = {}) {
    return NoiseSchedule(ScheduleKind::LoopRemask, w);
  }

  double alpha(double t) const { return alpha_linear(t); }

  double sigma_at(int i, const TimeGrid& grid) const {
    if (kind_ != ScheduleKind::LoopRemask) return 0.0;
    return sigma_loop(grid.t(i), window_, grid);
  }

  ScheduleKind kind() const { return kind_; }
  const RemaskWindow& window() const { return window_; }

 private:
  NoiseSchedule(ScheduleKind k, RemaskWindow w) : kind_(k), window_(w) {}
  ScheduleKind kind_;
  RemaskWindow window_;
};

// Per-step loss weight; nonpositive whenever the schedule is valid, so each
// -weight * log-prob loss term is nonnegative. With sigma == 0 and linear
// alpha this is exactly -1/i.
inline double lambda_weight(int i, const NoiseSchedule& sched,
                            const TimeGrid& grid) {
  if (i < 1 || i > grid.steps) throw schedule_error("step index outside 1..T");
  const double alpha_t = sched.alpha(grid.t(i));
  const double alpha_s = sched.alpha(grid.s(i));
  if (alpha_t >= 1.0) throw schedule_error("loss weight undefined at alpha_t = 1");
  const double sigma_t = sched.sigma_at(i, grid);
  return ((1.0 - sigma_t) * alpha_t - alpha_s) / (1.0 - alpha_t);
}

// Coefficients of the per-position posterior at step i. Masked-case mass
// splits between the prediction row and the mask; both must be in [0,1] and
// sum to one for the schedule to be usable.
struct StepCoefficients {
  double alpha_t = 0.0;
  double alpha_s = 0.0;
  double sigma_t = 0.0;
  double predict_mass = 0.0;  // masked case, weight on the predicted mixture
  double mask_mass = 0.0;     // masked case, weight on staying masked
};

inline StepCoefficients step_coefficients(int i, const NoiseSchedule& sched,
                                          const TimeGrid& grid) {
  if (i < 1 || i > grid.steps) throw schedule_error("step index outside 1..T");
  StepCoefficients c;
  c.alpha_t = sched.alpha(grid.t(i));
  c.alpha_s = sched.alpha(grid.s(i));
  c.sigma_t = sched.sigma_at(i, grid);
  const double denom = 1.0 - c.alpha_t;
  c.predict_mass = (c.alpha_s - (1.0 - c.sigma_t) * c.alpha_t) / denom;
  c.mask_mass = (1.0 - c.alpha_s - c.alpha_t * c.sigma_t) / denom;
  return c;
}

// Throws unless every step's coefficients are valid probabilities.
inline void validate_schedule(const NoiseSchedule& sched, const TimeGrid& grid,
                              double tol = 1e-12) {
  for (int i = 1; i <= grid.steps; ++i) {
    const StepCoefficients c = step_coefficients(i, sched, grid);
    const double coeffs[] = {c.sigma_t, 1.0 - c.sigma_t, c.predict_mass,
                             c.mask_mass};
    for (double v : coeffs) {
      if (!(v >= -tol && v <= 1.0 + tol))
        throw schedule_error("posterior coefficient outside [0,1] at step " +
                             std::to_string(i));
    }
    if (std::abs(c.predict_mass + c.mask_mass - 1.0) > tol)
      throw schedule_error("masked-case coefficients do not sum to 1 at step " +
                           std::to_string(i));
  }
}

}  // namespace adlm

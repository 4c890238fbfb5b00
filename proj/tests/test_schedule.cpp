#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adlm/rng.hpp"
#include "adlm/schedule.hpp"

#include <cmath>

using namespace adlm;

TEST_CASE("time grid endpoints") {
  TimeGrid grid{8};
  CHECK(grid.t(8) == 1.0);
  CHECK(grid.s(1) == 0.0);
  for (int i = 1; i < 8; ++i) CHECK(grid.t(i) < grid.t(i + 1));
  CHECK(grid.enclosing_step(0.3) == 3);
  CHECK(grid.enclosing_step(1.0) == 8);
  CHECK(grid.enclosing_step(0.0) == 1);
}

TEST_CASE("linear masking level boundaries") {
  CHECK(alpha_linear(0.0) == 1.0);
  CHECK(alpha_linear(1.0) == 0.0);
  CHECK(alpha_linear(1.0 / 3.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(alpha_linear(-0.1), schedule_error);
  CHECK_THROWS_AS(alpha_linear(1.1), schedule_error);
}

TEST_CASE("remask level zero outside the window and capped inside") {
  TimeGrid grid{1000};
  RemaskWindow w;
  CHECK(sigma_loop(0.9, w, grid) == 0.0);
  CHECK(sigma_loop(0.01, w, grid) == 0.0);
  const double sigma = sigma_loop(0.3, w, grid);
  const int i = grid.enclosing_step(0.3);
  const double cap =
      (1.0 - alpha_linear(grid.s(i))) / alpha_linear(grid.t(i));
  CHECK(sigma > 0.0);
  CHECK(sigma <= cap);

  RemaskWindow off = w;
  off.eta = 0.0;
  for (int step = 1; step <= grid.steps; ++step)
    CHECK(sigma_loop(grid.t(step), off, grid) == 0.0);

  RemaskWindow bad = w;
  bad.t_off = 0.7;
  CHECK_THROWS_AS(sigma_loop(0.5, bad, grid), schedule_error);
}

TEST_CASE("loss weight closed form") {
  const NoiseSchedule sched = NoiseSchedule::zero_remask();
  TimeGrid grid{4};
  CHECK(lambda_weight(2, sched, grid) == doctest::Approx(-0.5).epsilon(1e-15));
  // sigma = 0, linear alpha: the weight is -1/i at every step.
  for (int t_steps : {4, 7, 128}) {
    TimeGrid g{t_steps};
    for (int i = 1; i <= t_steps; ++i)
      CHECK(lambda_weight(i, sched, g) ==
            doctest::Approx(-1.0 / i).epsilon(1e-12));
  }
  // sigma = 1 at a step would give -alpha_s / (1 - alpha_t); check the
  // masked-case coefficient algebra directly instead of constructing an
  // invalid schedule: with sigma = 1 the numerator is alpha_t* 0 - alpha_s.
  const double alpha_t = 0.4, alpha_s = 0.7, sigma = 1.0;
  const double lambda = ((1.0 - sigma) * alpha_t - alpha_s) / (1.0 - alpha_t);
  CHECK(lambda == doctest::Approx(-alpha_s / (1.0 - alpha_t)).epsilon(1e-15));
}

TEST_CASE("schedule validity across grids") {
  for (int steps : {8, 128, 1024}) {
    TimeGrid grid{steps};
    for (const NoiseSchedule& sched :
         {NoiseSchedule::linear(), NoiseSchedule::zero_remask(),
          NoiseSchedule::loop_remask()}) {
      CHECK_NOTHROW(validate_schedule(sched, grid));
      for (int i = 1; i <= steps; ++i) {
        const StepCoefficients c = step_coefficients(i, sched, grid);
        CHECK(std::abs(c.predict_mass + c.mask_mass - 1.0) <= 1e-12);
        CHECK(lambda_weight(i, sched, grid) <= 1e-15);
      }
    }
  }
}

TEST_CASE("zero remasking recovers the plain weight") {
  TimeGrid grid{16};
  const NoiseSchedule zero = NoiseSchedule::zero_remask();
  for (int i = 1; i <= grid.steps; ++i) {
    const double alpha_t = zero.alpha(grid.t(i));
    const double alpha_s = zero.alpha(grid.s(i));
    const double plain = (alpha_t - alpha_s) / (1.0 - alpha_t);
    CHECK(lambda_weight(i, zero, grid) ==
          doctest::Approx(plain).epsilon(1e-15));
  }
}

TEST_CASE("deterministic rng substreams") {
  Rng a = Rng::substream(42, "train");
  Rng b = Rng::substream(42, "train");
  Rng c = Rng::substream(42, "sample");
  bool diverged = false;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) diverged = true;
  }
  CHECK(diverged);

  Rng d(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = d.uniform_int(10);
    CHECK(k >= 0);
    CHECK(k < 10);
  }

  Eigen::RowVectorXd weights(4);
  weights << 0.0, 0.5, 0.0, 0.5;
  Rng e(3);
  for (int i = 0; i < 200; ++i) {
    const int k = e.categorical(weights);
    CHECK((k == 1 || k == 3));
  }
}

#include "doctest.h"

#include "unitdiff/schedule.hpp"
#include "unitdiff/seed.hpp"

#include <cmath>

using namespace unitdiff;

TEST_SUITE("schedule") {

TEST_CASE("linear schedule") {
  const auto two = linear_schedule(2, 0.5, 0.5);
  CHECK(two.alpha_bar(1) == doctest::Approx(0.5));
  CHECK(two.alpha_bar(2) == doctest::Approx(0.25));

  const auto ns = linear_schedule(1000, 1e-4, 0.02);
  CHECK(std::abs(ns.alpha_bar(1000) / 4.0358297654e-05 - 1.0) < 1e-6);
  CHECK(ns.alpha_bar(0) == 1.0);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(ns.alpha_bar(t) < ns.alpha_bar(t - 1));
    const double rebuilt = (1.0 - ns.beta(t)) * ns.alpha_bar(t - 1);
    CHECK(std::abs(rebuilt / ns.alpha_bar(t) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(linear_schedule(1, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.2, 0.1), std::invalid_argument);
  CHECK(default_linear_schedule(100).alpha_bar(100) < 1e-2);
}

TEST_CASE("uniform schedule") {
  const auto ns = uniform_schedule(10, 0.3);
  CHECK(ns.alpha_bar(0) == 0.7);
  CHECK(ns.alpha_bar(5) == doctest::Approx(0.35));
  CHECK(ns.alpha_bar(10) == kUniformFloor);
  const auto big = uniform_schedule(1000, 0.3);
  CHECK(big.alpha_bar(0) == 0.7);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(big.alpha_bar(t) < big.alpha_bar(t - 1));
    CHECK(std::abs((1.0 - big.beta(t)) * big.alpha_bar(t - 1) / big.alpha_bar(t) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(uniform_schedule(10, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(uniform_schedule(1, 0.3), std::invalid_argument);
}

TEST_CASE("schedule spec json") {
  auto spec = ScheduleSpec::defaults(ScheduleKind::uniform, 200);
  const auto back = ScheduleSpec::from_json(spec.to_json());
  CHECK(back.kind == ScheduleKind::uniform);
  CHECK(back.steps == 200);
  CHECK(back.beta_end == spec.beta_end);
  CHECK(back.build().alpha_bar(0) == doctest::Approx(0.7));
}

TEST_CASE("q_sample") {
  const auto ns = default_linear_schedule(1000);
  const Matrix v0 = standard_normal(3, 4, 1);
  const Matrix zero = Matrix::Zero(3, 4);
  CHECK((q_sample(ns, v0, 100, zero) - std::sqrt(ns.alpha_bar(100)) * v0).norm() < 1e-15);
  CHECK_THROWS_AS(q_sample(ns, v0, 0, zero), std::invalid_argument);
  CHECK_THROWS_AS(q_sample(ns, v0, 1, Matrix::Zero(2, 4)), std::invalid_argument);

  const auto un = uniform_schedule(100, 0.3);
  const Matrix noise = standard_normal(3, 4, 2);
  const Matrix end = q_sample(un, v0, 100, noise);
  const double eps = kUniformFloor;
  CHECK((end - noise).norm() <= std::sqrt(eps) * v0.norm() + std::abs(std::sqrt(1 - eps) - 1) * noise.norm() + 1e-12);

  // Moments over 1e5 draws of a single coordinate.
  const int n = 100000;
  const int t = 300;
  Matrix one(1, 1);
  one << 2.0;
  const Matrix draws = standard_normal(n, 1, 3);
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = q_sample(ns, one, t, draws.row(i))(0, 0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  const double ab = ns.alpha_bar(t);
  CHECK(std::abs(mean - std::sqrt(ab) * 2.0) < 3 * std::sqrt((1 - ab) / n));
  CHECK(std::abs(var - (1 - ab)) < 3 * (1 - ab) * std::sqrt(2.0 / n));
}

TEST_CASE("posterior_sample") {
  const auto ns = default_linear_schedule(1000);
  const Matrix v0 = standard_normal(2, 3, 4);
  const Matrix zero = Matrix::Zero(2, 3);
  const Matrix vt = std::sqrt(ns.alpha_bar(400)) * v0;
  CHECK(posterior_sample(ns, vt, v0, 400, 0, standard_normal(2, 3, 5), ReverseMode::posterior) == v0);
  const Matrix post = posterior_sample(ns, vt, v0, 400, 380, zero, ReverseMode::posterior);
  CHECK((post - std::sqrt(ns.alpha_bar(380)) * v0).norm() < 1e-12);
  const Matrix ren = posterior_sample(ns, vt, v0, 400, 380, zero, ReverseMode::renoise);
  CHECK((ren - std::sqrt(ns.alpha_bar(380)) * v0).norm() < 1e-12);
  CHECK_THROWS_AS(posterior_sample(ns, vt, v0, 400, 400, zero, ReverseMode::posterior), std::invalid_argument);
}

TEST_CASE("posterior pass with the true v0 shrinks the residual noise") {
  const auto ns = default_linear_schedule(100);
  const int reps = 2000;
  const Matrix v0 = standard_normal(1, 4, 6);
  std::vector<double> err(101, 0.0);
  Rng rng(7);
  for (int r = 0; r < reps; ++r) {
    Matrix v = q_sample(ns, v0, 100, standard_normal(1, 4, rng));
    for (int t = 100; t >= 1; --t) {
      err[t] += (v - std::sqrt(ns.alpha_bar(t)) * v0).squaredNorm() / reps;
      v = posterior_sample(ns, v, v0, t, t - 1, standard_normal(1, 4, rng), ReverseMode::posterior);
    }
  }
  for (int t = 100; t > 1; --t) CHECK(err[t - 1] <= err[t] * 1.05 + 1e-3);
  CHECK(err[1] < 0.1 * err[100]);
}

TEST_CASE("subset_trajectory") {
  CHECK(subset_trajectory(10, 5) == std::vector<int>{10, 8, 6, 4, 2});
  const auto full = subset_trajectory(1000, 1000);
  for (int i = 0; i < 1000; ++i) CHECK(full[i] == 1000 - i);
  const auto fifty = subset_trajectory(1000, 50);
  CHECK(fifty.size() == 50);
  CHECK(fifty.front() == 1000);
  for (std::size_t i = 1; i < fifty.size(); ++i) CHECK(fifty[i - 1] - fifty[i] == 20);
  const auto odd = subset_trajectory(10, 7);
  for (std::size_t i = 1; i < odd.size(); ++i) CHECK(odd[i] < odd[i - 1]);
  CHECK(odd.back() >= 1);
  CHECK_THROWS_AS(subset_trajectory(10, 11), std::invalid_argument);
}

}

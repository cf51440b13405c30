#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fibrae/geodesic.hpp"
#include "fibrae/oracle.hpp"
#include "testing.hpp"

using namespace fibrae;
using namespace fibrae::oracle;
using geometry::LatentPoint;

TEST_CASE("linear transport oracle") {
  const Tensor a = Tensor::matrix(2, 2, {1, 1, 0, 1});
  const auto r = linear_transport_oracle(a, 1, {{0.2}, {0.0}}, std::vector{1.0});
  CHECK(r.f2[0] == doctest::Approx(-0.8).epsilon(1e-14));
  CHECK(r.energy == doctest::Approx(1.0).epsilon(1e-14));

  // brute force over the free endpoint
  double best_f = 0.0, best_e = INFINITY;
  for (int i = -20000; i <= 20000; ++i) {
    const double f2 = i * 1e-4;
    const double df = f2 - 0.2;
    const double e = (df + 1.0) * (df + 1.0) + 1.0;
    if (e < best_e) best_e = e, best_f = f2;
  }
  CHECK(std::abs(best_f - r.f2[0]) < 1e-4);
  CHECK(std::abs(best_e - r.energy) < 1e-8);

  const Tensor block = Tensor::matrix(3, 3, {2, 0, 0, 1, 1, 0, 0, 0, 3});
  const auto b = linear_transport_oracle(block, 2, {{0.1, -0.4}, {0.5}}, std::vector{-1.0});
  CHECK(b.f2[0] == doctest::Approx(0.1));
  CHECK(b.f2[1] == doctest::Approx(-0.4));

  const auto same = linear_transport_oracle(a, 1, {{0.2}, {0.7}}, std::vector{0.7});
  CHECK(same.f2[0] == 0.2);
  CHECK(same.energy == 0.0);

  CHECK_THROWS_AS(linear_transport_oracle(Tensor::matrix(2, 2, {0, 1, 0, 1}), 1, {{0.0}, {0.0}},
                                          std::vector{1.0}),
                  std::domain_error);
}

TEST_CASE("linear oracle beats naive transport") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng() % 3, n = 1 + rng() % 3, d = m + n + rng() % 5;
    Tensor a(Shape{d, m + n});
    for (double& v : a.values()) v = normal(rng);
    LatentPoint s{std::vector<double>(m), std::vector<double>(n)};
    for (double& v : s.f) v = normal(rng);
    for (double& v : s.b) v = normal(rng);
    std::vector<double> b2(n);
    for (double& v : b2) v = normal(rng);
    const auto r = linear_transport_oracle(a, m, s, b2);
    double naive = 0.0;
    for (std::size_t row = 0; row < d; ++row) {
      double y = 0.0;
      for (std::size_t i = 0; i < n; ++i) y += a(row, m + i) * (b2[i] - s.b[i]);
      naive += y * y;
    }
    CHECK(r.energy <= naive * (1.0 + 1e-12) + 1e-12);
  }
}

TEST_CASE("sphere oracle") {
  const double pi = std::numbers::pi;
  const auto eq = sphere_geodesic_oracle(0.0, 0.0, pi / 2);
  CHECK(eq.u2 == 0.0);
  CHECK(eq.length == doctest::Approx(pi / 2).epsilon(1e-14));
  CHECK(eq.degenerate);

  const auto same = sphere_geodesic_oracle(0.4, 1.0, 1.0);
  CHECK(same.length == 0.0);
  CHECK(same.u2 == doctest::Approx(0.4).epsilon(1e-14));

  const auto up = sphere_geodesic_oracle(0.5, 0.1, 0.9);
  const auto down = sphere_geodesic_oracle(-0.5, 0.1, 0.9);
  CHECK(up.length == doctest::Approx(down.length).epsilon(1e-14));
  CHECK(up.u2 == doctest::Approx(-down.u2).epsilon(1e-14));
  // the foot point lies poleward of the start
  CHECK(up.u2 > 0.5);

  // the foot is the closest point of the meridian
  const double p[3] = {std::cos(0.5) * std::cos(0.1), std::cos(0.5) * std::sin(0.1), std::sin(0.5)};
  double best = INFINITY;
  for (int i = -15000; i <= 15000; ++i) {
    const double u = i * 1e-4;
    const double q[3] = {std::cos(u) * std::cos(0.9), std::cos(u) * std::sin(0.9), std::sin(u)};
    best = std::min(best, std::acos(std::clamp(p[0] * q[0] + p[1] * q[1] + p[2] * q[2], -1.0, 1.0)));
  }
  CHECK(std::abs(best - up.length) < 1e-6);

  CHECK_THROWS_AS(sphere_geodesic_oracle(1.45, 0.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(sphere_geodesic_oracle(0.0, 0.0, 2.0), std::domain_error);
}

TEST_CASE("grid oracle") {
  const geometry::IdentityDecoder id(1, 1);
  const auto flat = grid_geodesic_oracle(id, {{0.3}, {0.0}}, std::vector{1.0}, 32);
  CHECK(std::abs(flat.length - 1.0) <= 0.05);
  CHECK(flat.endpoint.b[0] == 1.0);

  // diagonal moves are forced when the fiber is stretched
  const geometry::LinearDecoder tilted(Tensor::matrix(2, 2, {1, 1, 0, 1}), 1);
  const auto tg = grid_geodesic_oracle(tilted, {{0.2}, {0.0}}, std::vector{1.0}, 48);
  CHECK(tg.length == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(tg.endpoint.f[0] + 0.8) < 0.1);

  const auto zero = grid_geodesic_oracle(id, {{0.3}, {0.5}}, std::vector{0.5}, 16);
  CHECK(zero.length == 0.0);
  CHECK(zero.endpoint.f == std::vector{0.3});

  const geometry::SphereDecoder sphere;
  const auto want = sphere_geodesic_oracle(0.3, 0.0, 0.8);
  const auto got = grid_geodesic_oracle(sphere, {{0.3}, {0.0}}, std::vector{0.8}, 48);
  CHECK(std::abs(got.length - want.length) / want.length < 0.05);

  const geometry::IdentityDecoder id3(1, 2);
  const auto three = grid_geodesic_oracle(id3, {{0.0}, {0.0, 0.0}}, std::vector{0.6, 0.8}, 16);
  CHECK(three.length == doctest::Approx(1.0).epsilon(0.1));

  CHECK_THROWS(grid_geodesic_oracle(id, {{0.3}, {0.0}}, std::vector{1.0}, 65));
  CHECK_THROWS(grid_geodesic_oracle(geometry::IdentityDecoder(2, 2), {{0.0, 0.0}, {0.0, 0.0}},
                                    std::vector{1.0, 1.0}, 8));
}

TEST_CASE("oracle suites pass") {
  for (const char* suite : {"linear", "sphere", "grid"}) {
    for (const auto& c : run_oracle_suite(suite)) {
      INFO(c.name, ": ", c.detail);
      CHECK(c.passed);
    }
  }
  CHECK_THROWS_AS(run_oracle_suite("torus"), std::invalid_argument);
}

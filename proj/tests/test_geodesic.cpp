#include <doctest.h>

#include <cmath>
#include <random>

#include "fibrae/geodesic.hpp"
#include "fibrae/geometry.hpp"
#include "testing.hpp"

using namespace fibrae;
using namespace fibrae::geodesic;
using geometry::LatentPoint;
using geometry::LinearDecoder;

namespace {

LinearDecoder cross_coupled() {
  return LinearDecoder(Tensor::matrix(2, 2, {1, 1, 0, 1}), 1);
}

}  // namespace

TEST_CASE("hat functions") {
  CHECK(basis_eval(0, 0, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(basis_eval(1, 1, 0.25) == 0.0);
  CHECK(basis_eval(1, 0, 0.25) == doctest::Approx(std::pow(2.0, -1.5)));
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t k = 0; k < (std::size_t{1} << j); ++k) {
      CHECK(basis_eval(j, k, 0.0) == 0.0);
      CHECK(basis_eval(j, k, 1.0) == 0.0);
      const double mid = (k + 0.5) / std::ldexp(1.0, static_cast<int>(j));
      CHECK(basis_eval(j, k, mid) ==
            doctest::Approx(std::pow(2.0, -0.5 * j - 1.0)).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(basis_eval(2, 4, 0.5), std::out_of_range);
}

TEST_CASE("basis is orthonormal in H1") {
  const FaberSchauderBasis basis(6);
  REQUIRE(basis.size() == 65);
  std::vector<std::vector<double>> samples;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    samples.push_back({});
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < basis.size(); ++a) {
    for (std::size_t b = a; b < basis.size(); ++b) {
      const double ip = geometry::h1_inner_product(
          [&](double t) { return basis.eval(a, t); },
          [&](double t) { return basis.eval(b, t); }, 1e-4);
      worst = std::max(worst, std::abs(ip - (a == b ? 1.0 : 0.0)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("coefficient counts and path evaluation") {
  for (std::size_t depth : {0u, 1u, 3u, 6u}) {
    for (std::size_t m : {1u, 2u}) {
      LatentPoint start{std::vector<double>(m, 0.1), {0.5, -0.5}};
      const auto path = straight_path(start, std::vector{1.0, 2.0}, depth);
      CHECK(path.coefficient_count() == ((std::size_t{1} << depth) + 1) * (m + 2));
    }
  }
  LatentPoint start{{0.2}, {0.0}};
  auto path = straight_path(start, std::vector{1.0}, 3);
  for (double t : {0.0, 0.3, 0.5, 1.0}) {
    const auto z = path_eval(path, t);
    CHECK(z[0] == doctest::Approx(0.2));
    CHECK(z[1] == doctest::Approx(t));
  }
  std::mt19937_64 rng(1);
  for (std::size_t r = 2; r < path.coefficients.rows(); ++r) {
    for (std::size_t c = 0; c < 2; ++c) path.coefficients(r, c) = rng() % 7 - 3.0;
  }
  CHECK(path_eval(path, 0.0) == start.joined());
  const auto end = path_eval(path, 1.0);
  CHECK(end[0] == 0.2);
  CHECK(end[1] == 1.0);
}

TEST_CASE("naive transport") {
  LatentPoint p{{0.3, -0.2}, {1.0, 0.0}};
  const auto q = naive_transport(p, std::vector{0.0, 1.0});
  CHECK(q.f == p.f);
  CHECK(q.b == std::vector{0.0, 1.0});
  CHECK(naive_transport(p, p.b).b == p.b);
  CHECK_THROWS_AS(naive_transport(p, std::vector{1.0}), ShapeError);
}

TEST_CASE("solver config validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.dt = 1.0 / 32;
  CHECK_THROWS(c.validate());
  c.dt = 0.3;
  CHECK_THROWS(c.validate());
  c = SolverConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS(c.validate());
  CHECK(parse_optimizer(optimizer_name(OptimizerKind::kAdam)) == OptimizerKind::kAdam);
  CHECK_THROWS(parse_optimizer("lbfgs"));
}

TEST_CASE("constant speed residual") {
  CHECK(constant_speed_residual(std::vector{2.0, 2.0, 2.0}) == 0.0);
  CHECK(constant_speed_residual(std::vector{0.0, 0.0}) == 0.0);
  CHECK(constant_speed_residual(std::vector{1.0, 3.0}) == doctest::Approx(1.0));
}

TEST_CASE("solver on linear decoders") {
  const SolverConfig cfg;
  const LatentPoint start{{0.2}, {0.0}};

  SUBCASE("same fiber") {
    const auto r = solve_geodesic(cross_coupled(), start, start.b, cfg);
    CHECK(r.endpoint.f == start.f);
    CHECK(r.energy <= 1e-10);
  }
  SUBCASE("cross coupled") {
    const auto r = solve_geodesic(cross_coupled(), start, std::vector{1.0}, cfg);
    CHECK(std::abs(r.endpoint.f[0] + 0.8) < 1e-3);
    CHECK(std::abs(r.energy - 1.0) < 1e-3);
    CHECK(r.energy <= r.initial_energy);
    CHECK(r.residual < 1e-3);
    CHECK(r.endpoint.b == std::vector{1.0});
    REQUIRE(r.trace);
    CHECK((*r.trace)(0, 0) == 0.2);
    CHECK((*r.trace)(0, 1) == 0.0);
    CHECK((*r.trace)(r.trace->rows() - 1, 1) == 1.0);
  }
  SUBCASE("axis aligned") {
    LinearDecoder dec(Tensor::matrix(2, 2, {1, 0, 0, 2}), 1);
    const auto r = solve_geodesic(dec, start, std::vector{1.0}, cfg);
    CHECK(std::abs(r.endpoint.f[0] - 0.2) < 1e-3);
    CHECK(std::abs(r.energy - 4.0) < 4e-3);
  }
  SUBCASE("strong regularization pins the naive endpoint") {
    SolverConfig reg = cfg;
    reg.lambda_reg = 1e6;
    const auto r = solve_geodesic(cross_coupled(), start, std::vector{1.0}, reg);
    CHECK(std::abs(r.endpoint.f[0] - 0.2) < 1e-3);
  }
  SUBCASE("awkward base endpoints are hit exactly") {
    const LatentPoint s{{0.1}, {0.1}};
    SolverConfig quick = cfg;
    quick.max_iterations = 5;
    for (double b2 : {0.7, 0.3, -1.9, 1e-3, 12.345}) {
      const auto r = solve_geodesic(cross_coupled(), s, std::vector{b2}, quick);
      CHECK((*r.trace)(r.trace->rows() - 1, 1) == b2);
      CHECK(r.endpoint.b[0] == b2);
    }
  }
}

TEST_CASE("solver on the sphere stays on a great circle") {
  // equator to equator: the equator itself is the geodesic, so the fiber
  // coordinate stays at zero
  geometry::SphereDecoder sphere;
  const auto r = solve_geodesic(sphere, {{0.0}, {0.0}}, std::vector{1.0}, SolverConfig{});
  CHECK(std::abs(r.endpoint.f[0]) < 1e-6);
  CHECK(r.energy == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("correspondence map") {
  const SolverConfig cfg;
  const auto dec = cross_coupled();
  CHECK(correspondence_map(dec, std::vector<LatentPoint>{}, std::vector{1.0}, cfg).empty());

  std::vector<LatentPoint> starts;
  for (int i = 0; i < 5; ++i) starts.push_back({{-0.4 + 0.2 * i}, {0.0}});
  const auto same = correspondence_map(dec, starts, std::vector{0.0}, cfg, 2);
  for (std::size_t i = 0; i < starts.size(); ++i) CHECK(same[i].endpoint.f == starts[i].f);

  const auto moved = correspondence_map(dec, starts, std::vector{0.5}, cfg, 3);
  REQUIRE(moved.size() == starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    CHECK(std::abs(moved[i].endpoint.f[0] - (starts[i].f[0] - 0.5)) < 1e-3);
  }
  const auto serial = correspondence_map(dec, starts, std::vector{0.5}, cfg, 1);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    CHECK(serial[i].endpoint.f == moved[i].endpoint.f);
  }
  std::vector<LatentPoint> mixed{{{0.0}, {0.0}}, {{0.0}, {1.0}}};
  CHECK_THROWS(correspondence_map(dec, mixed, std::vector{0.5}, cfg));

  const auto csv = correspondence_csv(starts, moved);
  CHECK(csv.rfind("start_f_0,end_f_0,energy,residual,converged\n", 0) == 0);
}

TEST_CASE("interpolation and trace export") {
  geometry::SphereDecoder sphere;
  SolverConfig cfg;
  cfg.max_iterations = 20;
  const LatentPoint start{{0.3}, {0.0}};
  const auto r = solve_geodesic(sphere, start, std::vector{0.5}, cfg);
  const auto two = interpolate(sphere, r, 2);
  REQUIRE(two.size() == 2);
  CHECK(testing::rel_error(two[0], sphere.decode(start)) < 1e-15);
  CHECK(testing::rel_error(two[1], sphere.decode(r.endpoint)) < 1e-12);
  const auto one = interpolate(sphere, r, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == two[0]);

  TransportResult bare = r;
  bare.trace.reset();
  CHECK_THROWS(interpolate(sphere, bare, 3));

  const auto csv = path_trace_csv(r);
  CHECK(csv.rfind("t,z_0,z_1,seg_energy\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 258);
  CHECK(csv.substr(csv.size() - 2) == ",\n");
}

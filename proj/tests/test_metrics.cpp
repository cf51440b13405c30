#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fibrae/metrics.hpp"
#include "testing.hpp"

using namespace fibrae;
using namespace fibrae::metrics;

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t z, std::mt19937_64& rng) {
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = rng() % z;
  return out;
}

}  // namespace

TEST_CASE("lisi basic cases") {
  std::mt19937_64 rng(4);
  const Tensor pts = testing::random_tensor({120, 3}, rng);

  const auto ones = lisi(make_cloud(pts, std::vector<std::size_t>(120, 0)));
  for (double s : ones) CHECK(s == 1.0);

  Tensor lattice(Shape{500, 1});
  std::vector<std::size_t> alternating(500);
  for (std::size_t i = 0; i < 500; ++i) {
    lattice(i, 0) = 0.01 * static_cast<double>(i);
    alternating[i] = i % 2;
  }
  CHECK(std::abs(mean_of(lisi(make_cloud(lattice, alternating))) - 2.0) < 0.1);

  const auto labels = random_labels(120, 4, rng);
  for (double s : lisi(make_cloud(pts, labels), 10.0)) {
    CHECK(s >= 1.0);
    CHECK(s <= 4.0);
  }

  // separated clusters with their own labels score close to 1
  Tensor split(Shape{200, 2});
  std::vector<std::size_t> side(200);
  for (std::size_t i = 0; i < 200; ++i) {
    side[i] = i < 100 ? 0 : 1;
    split(i, 0) = (i < 100 ? 0.0 : 50.0) + 0.01 * static_cast<double>(i % 100);
    split(i, 1) = 0.003 * static_cast<double>(i % 7);
  }
  CHECK(mean_of(lisi(make_cloud(split, side), 20.0)) < 1.01);
}

TEST_CASE("lisi is invariant under rigid motions") {
  std::mt19937_64 rng(8);
  const Tensor pts = testing::random_tensor({150, 2}, rng);
  const auto labels = random_labels(150, 3, rng);
  const double a = 0.7, c = std::cos(a), s = std::sin(a);
  Tensor moved(pts.shape());
  for (std::size_t i = 0; i < 150; ++i) {
    moved(i, 0) = c * pts(i, 0) - s * pts(i, 1) + 3.0;
    moved(i, 1) = s * pts(i, 0) + c * pts(i, 1) - 1.5;
  }
  const auto before = lisi(make_cloud(pts, labels), 15.0);
  const auto after = lisi(make_cloud(moved, labels), 15.0, 1);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(std::abs(before[i] - after[i]) < 1e-8);
  }
}

TEST_CASE("lisi errors and ties") {
  std::mt19937_64 rng(1);
  const Tensor pts = testing::random_tensor({20, 2}, rng);
  CHECK_THROWS(lisi(make_cloud(pts, std::vector<std::size_t>(20, 0)), 30.0));
  CHECK_THROWS(lisi(make_cloud(pts, std::vector<std::size_t>(20, 0)), 1.0));
  CHECK_THROWS(make_cloud(pts, std::vector<std::size_t>(19, 0)));

  // identical points: every neighbour is tied, the score is the inverse
  // Simpson index of the labels among them
  Tensor same(Shape{40, 2}, 0.25);
  std::vector<std::size_t> labels(40);
  for (std::size_t i = 0; i < 40; ++i) labels[i] = i % 2;
  for (double s : lisi(make_cloud(same, labels), 5.0)) CHECK(s == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("ward decomposition") {
  const auto two = ward_decomposition(make_cloud(Tensor(Shape{2, 1}, {0.0, 2.0}), {0, 1}));
  CHECK(two.total == doctest::Approx(1.0));
  CHECK(two.between == doctest::Approx(1.0));
  CHECK(two.within == 0.0);

  std::mt19937_64 rng(12);
  const Tensor pts = testing::random_tensor({300, 4}, rng, -3.0, 5.0);
  const auto one = ward_decomposition(make_cloud(pts, std::vector<std::size_t>(300, 0)));
  CHECK(std::abs(one.between) < 1e-12);
  CHECK(one.within == doctest::Approx(one.total).epsilon(1e-12));

  for (int trial = 0; trial < 10; ++trial) {
    const auto labels = random_labels(300, 2 + trial, rng);
    const auto w = ward_decomposition(make_cloud(pts, labels));
    CHECK(std::abs(w.total - w.between - w.within) < 1e-10);
  }

  // uneven groups: the plain averages do not add up
  const auto uneven = ward_decomposition(
      make_cloud(Tensor(Shape{4, 1}, {0.0, 0.0, 1.0, 5.0}), {0, 0, 0, 1}));
  CHECK(std::abs(uneven.total - uneven.between - uneven.within) < 1e-12);
  CHECK(std::abs(uneven.total - uneven.between_unweighted - uneven.within_unweighted) > 0.1);
}

TEST_CASE("metrics report") {
  std::mt19937_64 rng(2);
  const Tensor pts = testing::random_tensor({60, 2}, rng);
  const auto report = metrics_report(
      pts, {{"batch", random_labels(60, 2, rng)}, {"cell_type", random_labels(60, 3, rng)}},
      10.0, true);
  CHECK(report.contains("batch"));
  CHECK(report["cell_type"]["lisi"]["per_point"].size() == 60);
  const auto& w = report["batch"]["ward"];
  CHECK(std::abs(w["total"].get<double>() - w["between"].get<double>() -
                 w["within"].get<double>()) < 1e-10);
}

#include "fibrae/oracle.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <random>
#include <stdexcept>

#include "fibrae/geodesic.hpp"

namespace fibrae::oracle {

using geometry::LatentPoint;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_eigen(const Tensor& t) {
  return {t.values().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

}  // namespace

LinearTransport linear_transport_oracle(const Tensor& a, std::size_t fiber_dim,
                                        const LatentPoint& start,
                                        std::span<const double> b2) {
  if (a.rank() != 2 || fiber_dim == 0 || fiber_dim >= a.cols()) {
    throw ShapeError("linear oracle: A must be D x (m+n) with m, n > 0");
  }
  const auto m = static_cast<Eigen::Index>(fiber_dim);
  const auto n = static_cast<Eigen::Index>(a.cols()) - m;
  if (start.f.size() != fiber_dim || static_cast<Eigen::Index>(start.b.size()) != n ||
      static_cast<Eigen::Index>(b2.size()) != n) {
    throw ShapeError("linear oracle: point dimensions do not match A");
  }
  const auto full = as_eigen(a);
  const Eigen::MatrixXd af = full.leftCols(m), ab = full.rightCols(n);
  Eigen::VectorXd db(n);
  for (Eigen::Index i = 0; i < n; ++i) db[i] = b2[static_cast<std::size_t>(i)] - start.b[static_cast<std::size_t>(i)];

  const Eigen::MatrixXd gram = af.transpose() * af;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1.0))) {
    throw std::domain_error("linear oracle: A_f^T A_f is singular");
  }
  const Eigen::VectorXd df = -gram.ldlt().solve(af.transpose() * (ab * db));
  LinearTransport out;
  for (Eigen::Index i = 0; i < m; ++i) out.f2.push_back(start.f[static_cast<std::size_t>(i)] + df[i]);
  out.energy = (af * df + ab * db).squaredNorm();
  return out;
}

SphereTransport sphere_geodesic_oracle(double u1, double v1, double v2) {
  const double pi = std::numbers::pi;
  if (!(std::abs(u1) < pi / 2 - 0.2)) {
    throw std::domain_error(fmt::format("sphere oracle: |u1| = {} too close to a pole", std::abs(u1)));
  }
  if (!(std::abs(v2 - v1) <= pi / 2)) {
    throw std::domain_error("sphere oracle: meridian separation exceeds pi/2");
  }
  const double p[3] = {std::cos(u1) * std::cos(v1), std::cos(u1) * std::sin(v1), std::sin(u1)};
  // the meridian lies on the great circle with normal n
  const double nrm[3] = {-std::sin(v2), std::cos(v2), 0.0};
  const double pn = p[0] * nrm[0] + p[1] * nrm[1];
  SphereTransport out;
  out.length = std::asin(std::min(1.0, std::cos(u1) * std::abs(std::sin(v1 - v2))));
  const double q[3] = {p[0] - pn * nrm[0], p[1] - pn * nrm[1], p[2]};
  const double along = q[0] * std::cos(v2) + q[1] * std::sin(v2);
  if (std::hypot(along, q[2]) < 1e-12) {
    out.degenerate = true;
    out.u2 = u1;
  } else {
    out.u2 = std::atan2(q[2], along);
  }
  return out;
}

GridTransport grid_geodesic_oracle(const geometry::LatentDecoder& decoder,
                                   const LatentPoint& start, std::span<const double> b2,
                                   std::size_t resolution, const GridBox& box) {
  const std::size_t m = decoder.fiber_dim(), n = decoder.base_dim(), l = m + n;
  if (l > 3) throw std::invalid_argument("grid oracle: latent dimension above 3");
  if (resolution < 2 || resolution > 64) {
    throw std::invalid_argument(fmt::format("grid oracle: resolution {} outside [2, 64]", resolution));
  }
  if (start.f.size() != m || start.b.size() != n || b2.size() != n) {
    throw ShapeError("grid oracle: point dimensions do not match the decoder");
  }
  GridTransport out;
  if (std::equal(start.b.begin(), start.b.end(), b2.begin())) {
    out.endpoint = start;
    out.unique = true;
    out.runner_up = std::numeric_limits<double>::infinity();
    return out;
  }

  // per axis: node coordinates, index of the start node, index of the target
  std::vector<std::vector<double>> axes(l);
  std::vector<std::size_t> origin(l), target(l);
  const double fh = (box.fiber_hi - box.fiber_lo) / static_cast<double>(resolution);
  for (std::size_t c = 0; c < m; ++c) {
    const double f1 = start.f[c];
    const auto below = static_cast<std::ptrdiff_t>(std::floor((f1 - box.fiber_lo) / fh + 1e-9));
    const auto above = static_cast<std::ptrdiff_t>(std::floor((box.fiber_hi - f1) / fh + 1e-9));
    for (std::ptrdiff_t k = -below; k <= above; ++k) axes[c].push_back(f1 + static_cast<double>(k) * fh);
    origin[c] = static_cast<std::size_t>(below);
  }
  const auto between = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(resolution) / (1.0 + 2.0 * box.base_margin))));
  const std::size_t margin = (resolution - std::min(resolution, between)) / 2;
  double widest = 0.0;
  for (std::size_t i = 0; i < n; ++i) widest = std::max(widest, std::abs(b2[i] - start.b[i]) / static_cast<double>(between));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = m + i;
    const double b1 = start.b[i];
    if (b2[i] != b1) {
      const double h = (b2[i] - b1) / static_cast<double>(between);
      for (std::size_t k = 0; k <= between + 2 * margin; ++k) {
        axes[c].push_back(b1 + (static_cast<double>(k) - static_cast<double>(margin)) * h);
      }
      origin[c] = margin;
      target[c] = margin + between;
      axes[c][margin] = b1;
      axes[c][target[c]] = b2[i];
    } else {
      const std::size_t half = resolution / 2;
      for (std::size_t k = 0; k <= 2 * half; ++k) {
        axes[c].push_back(b1 + (static_cast<double>(k) - static_cast<double>(half)) * widest);
      }
      origin[c] = target[c] = half;
      axes[c][half] = b1;
    }
  }

  std::vector<std::size_t> extent(l), stride(l);
  std::size_t total = 1;
  for (std::size_t c = l; c-- > 0;) {
    extent[c] = axes[c].size();
    stride[c] = total;
    total *= extent[c];
  }
  out.nodes = total;
  auto index_of = [&](const std::vector<std::size_t>& idx) {
    std::size_t s = 0;
    for (std::size_t c = 0; c < l; ++c) s += idx[c] * stride[c];
    return s;
  };
  auto coords_of = [&](std::size_t node) {
    std::vector<std::size_t> idx(l);
    for (std::size_t c = 0; c < l; ++c) idx[c] = node / stride[c] % extent[c];
    return idx;
  };

  Tensor latent(Shape{total, l});
  for (std::size_t node = 0; node < total; ++node) {
    const auto idx = coords_of(node);
    for (std::size_t c = 0; c < l; ++c) latent(node, c) = axes[c][idx[c]];
  }
  const Tensor image = decoder.decode(latent);
  const std::size_t d = image.cols();

  std::vector<std::vector<int>> offsets;
  for (std::size_t code = 0; code < static_cast<std::size_t>(std::pow(3, l)); ++code) {
    std::vector<int> off(l);
    std::size_t rest = code;
    bool zero = true;
    for (std::size_t c = 0; c < l; ++c) {
      off[c] = static_cast<int>(rest % 3) - 1;
      rest /= 3;
      zero = zero && off[c] == 0;
    }
    if (!zero) offsets.push_back(off);
  }

  std::vector<double> dist(total, std::numeric_limits<double>::infinity());
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  const std::size_t source = index_of(origin);
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [du, u] = queue.top();
    queue.pop();
    if (du > dist[u]) continue;
    const auto idx = coords_of(u);
    for (const auto& off : offsets) {
      std::size_t v = u;
      bool inside = true;
      for (std::size_t c = 0; c < l && inside; ++c) {
        const auto k = static_cast<std::ptrdiff_t>(idx[c]) + off[c];
        inside = k >= 0 && k < static_cast<std::ptrdiff_t>(extent[c]);
        v = v - idx[c] * stride[c] + static_cast<std::size_t>(k < 0 ? 0 : k) * stride[c];
      }
      if (!inside) continue;
      double w = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = image(u, j) - image(v, j);
        w += diff * diff;
      }
      const double alt = du + std::sqrt(w);
      if (alt < dist[v]) {
        dist[v] = alt;
        queue.emplace(alt, v);
      }
    }
  }

  // enumerate the target fiber: base indices fixed, fiber indices free
  std::vector<std::size_t> best_idx;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, std::vector<std::size_t>>> targets;
  std::size_t fiber_nodes = 1;
  for (std::size_t c = 0; c < m; ++c) fiber_nodes *= extent[c];
  for (std::size_t t = 0; t < fiber_nodes; ++t) {
    std::vector<std::size_t> idx(l);
    std::size_t rest = t;
    for (std::size_t c = m; c-- > 0;) {
      idx[c] = rest % extent[c];
      rest /= extent[c];
    }
    for (std::size_t c = m; c < l; ++c) idx[c] = target[c];
    const double dv = dist[index_of(idx)];
    targets.emplace_back(dv, idx);
    if (dv < best) {
      best = dv;
      best_idx = idx;
    }
  }
  out.length = best;
  out.runner_up = std::numeric_limits<double>::infinity();
  for (const auto& [dv, idx] : targets) {
    bool adjacent = true;
    for (std::size_t c = 0; c < m; ++c) {
      adjacent = adjacent && (idx[c] + 1 >= best_idx[c] && idx[c] <= best_idx[c] + 1);
    }
    if (!adjacent) out.runner_up = std::min(out.runner_up, dv);
  }
  out.unique = out.runner_up >= 1.01 * out.length;
  std::vector<double> z(l);
  for (std::size_t c = 0; c < l; ++c) z[c] = axes[c][best_idx[c]];
  out.endpoint = LatentPoint::split(z, m);
  return out;
}

// ---- suites ----------------------------------------------------------------

namespace {

SuiteCheck check(std::string name, bool ok, std::string detail) {
  return {std::move(name), ok, std::move(detail)};
}

std::vector<SuiteCheck> linear_suite(std::uint64_t seed) {
  std::vector<SuiteCheck> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  const geodesic::SolverConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t m = 1 + rng() % 2, n = 1 + rng() % 2, d = m + n + rng() % 6;
    Tensor a(Shape{d, m + n});
    for (double& v : a.values()) v = normal(rng);
    LatentPoint start{std::vector<double>(m), std::vector<double>(n)};
    for (double& v : start.f) v = unit(rng);
    for (double& v : start.b) v = unit(rng);
    std::vector<double> b2(n);
    for (double& v : b2) v = unit(rng);
    const auto want = linear_transport_oracle(a, m, start, b2);
    const auto got = geodesic::solve_geodesic(geometry::LinearDecoder(a, m), start, b2, cfg);
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      err += std::pow(got.endpoint.f[i] - want.f2[i], 2);
      norm += want.f2[i] * want.f2[i];
    }
    const double ferr = std::sqrt(err) / std::max(1.0, std::sqrt(norm));
    const double eerr = std::abs(got.energy - want.energy) / std::max(want.energy, 1e-12);
    out.push_back(check(fmt::format("linear decoder {} (D={}, m={}, n={})", trial, d, m, n),
                        ferr <= 1e-3 && eerr <= 1e-3,
                        fmt::format("endpoint rel err {:.2e}, energy rel err {:.2e}", ferr, eerr)));
  }
  return out;
}

std::vector<SuiteCheck> sphere_suite() {
  std::vector<SuiteCheck> out;
  const geometry::SphereDecoder sphere;
  const geodesic::SolverConfig cfg;
  const double cases[][3] = {{0.0, 0.0, std::numbers::pi / 2}, {0.3, 0.0, 0.8}, {-0.5, 0.2, -0.6}};
  for (const auto& c : cases) {
    const auto want = sphere_geodesic_oracle(c[0], c[1], c[2]);
    const auto got = geodesic::solve_geodesic(sphere, {{c[0]}, {c[1]}}, std::vector{c[2]}, cfg);
    const double lerr = std::abs(got.length - want.length) / want.length;
    const double uerr = std::abs(got.endpoint.f[0] - want.u2);
    out.push_back(check(fmt::format("sphere ({}, {}) -> v={:.4f}", c[0], c[1], c[2]),
                        lerr <= 2e-2 && uerr <= 2e-2,
                        fmt::format("length rel err {:.2e}, endpoint err {:.2e}", lerr, uerr)));
  }
  return out;
}

std::vector<SuiteCheck> grid_suite() {
  std::vector<SuiteCheck> out;
  const geometry::IdentityDecoder id(1, 1);
  const auto flat = grid_geodesic_oracle(id, {{0.3}, {0.0}}, std::vector{1.0}, 32);
  const double ferr = std::abs(flat.length - 1.0);
  out.push_back(check("identity decoder lattice", ferr <= 5e-2,
                      fmt::format("length {:.6f} vs 1", flat.length)));
  const geometry::SphereDecoder sphere;
  const double pi = std::numbers::pi;
  for (const auto& c : {std::array{0.0, 0.0, pi / 2}, std::array{0.3, 0.0, 0.8}}) {
    const auto want = sphere_geodesic_oracle(c[0], c[1], c[2]);
    const auto got = grid_geodesic_oracle(sphere, {{c[0]}, {c[1]}}, std::vector{c[2]}, 48);
    const double err = std::abs(got.length - want.length) / want.length;
    out.push_back(check(fmt::format("sphere lattice ({}, {}) -> v={:.4f}", c[0], c[1], c[2]),
                        err <= 5e-2, fmt::format("length rel err {:.2e}", err)));
  }
  return out;
}

}  // namespace

std::vector<SuiteCheck> run_oracle_suite(std::string_view suite, std::uint64_t seed) {
  if (suite == "linear") return linear_suite(seed);
  if (suite == "sphere") return sphere_suite();
  if (suite == "grid") return grid_suite();
  throw std::invalid_argument(
      fmt::format("unknown oracle suite '{}' (expected linear, sphere or grid)", suite));
}

}  // namespace fibrae::oracle

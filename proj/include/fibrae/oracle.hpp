#pragma once

// Independent ground truth for the geodesic solver: closed-form transport
// under a constant metric, great circles on the unit sphere, and shortest
// paths on a latent lattice.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fibrae/geometry.hpp"
#include "fibrae/tensor.hpp"

namespace fibrae::oracle {

struct LinearTransport {
  std::vector<double> f2;
  double energy = 0.0;  // ||A_f df + A_b db||^2, no 1/2
};

// a is D x (m+n) with columns [A_f | A_b]. Throws std::domain_error when
// A_f^T A_f is singular.
LinearTransport linear_transport_oracle(const Tensor& a, std::size_t fiber_dim,
                                        const geometry::LatentPoint& start,
                                        std::span<const double> b2);

struct SphereTransport {
  double u2 = 0.0;
  double length = 0.0;
  // Set when every point of the meridian is equally far (start at a pole of
  // the meridian's great circle); u2 then repeats u1.
  bool degenerate = false;
};

// Closest point to (u1, v1) on the meridian {v = v2} of the unit sphere.
// Requires |u1| < pi/2 - 0.2 and |v2 - v1| <= pi/2.
SphereTransport sphere_geodesic_oracle(double u1, double v1, double v2);

struct GridBox {
  double fiber_lo = -1.0;
  double fiber_hi = 1.0;
  // Extra base range on each side of [b1, b2], as a fraction of |b2 - b1|.
  double base_margin = 0.5;
};

struct GridTransport {
  geometry::LatentPoint endpoint;
  double length = 0.0;
  // Shortest length to a target node that is not a lattice neighbour of
  // the endpoint; infinity when there is none.
  double runner_up = 0.0;
  bool unique = false;  // runner_up >= 1.01 * length
  std::size_t nodes = 0;
};

// Dijkstra over a lattice with `resolution` cells per axis and all
// 3^d - 1 neighbour offsets, edge weights ||Psi(a) - Psi(b)||. The lattice
// contains the start and the target base as nodes. Requires m + n <= 3 and
// resolution <= 64.
GridTransport grid_geodesic_oracle(const geometry::LatentDecoder& decoder,
                                   const geometry::LatentPoint& start,
                                   std::span<const double> b2, std::size_t resolution,
                                   const GridBox& box = {});

struct SuiteCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Suites "linear", "sphere" and "grid" compare the geodesic solver (or the
// lattice oracle) with the analytic oracles. Throws std::invalid_argument
// for other names.
std::vector<SuiteCheck> run_oracle_suite(std::string_view suite, std::uint64_t seed = 0);

}  // namespace fibrae::oracle

#pragma once

// Geodesic transport between fibers of the latent space.
//
// A path gamma: [0,1] -> R^{m+n} is expanded on the Faber-Schauder system
//   s_0(t) = 1, s_1(t) = t, s_{j,k}(t) = int_0^t psi_{j,k}(u) du
// with psi_{j,k} = 2^{j/2} psi(2^j t - k) the orthonormal Haar system, which
// makes {s_0, s_1, s_{j,k}} orthonormal for <phi,chi> = phi(0)chi(0) +
// int phi' chi'. Levels j < N are kept, giving 2^N + 1 coefficients per
// latent coordinate. Every s_{j,k} vanishes at both ends, so pinning the
// s_0 coefficient to the start point and the base block of the s_1
// coefficient to b2 - b1 enforces gamma(0) = start and base(gamma(1)) = b2
// exactly at every iterate.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fibrae/geometry.hpp"
#include "fibrae/nn.hpp"
#include "fibrae/tensor.hpp"

namespace fibrae::geodesic {

using geometry::LatentDecoder;
using geometry::LatentPoint;

// Hat function s_{j,k}: support [k 2^-j, (k+1) 2^-j], peak 2^(-j/2-1) at
// the midpoint. Throws std::out_of_range unless 0 <= k < 2^j.
double basis_eval(std::size_t j, std::size_t k, double t);

class FaberSchauderBasis {
 public:
  explicit FaberSchauderBasis(std::size_t depth);

  std::size_t depth() const noexcept { return depth_; }
  // 2^N + 1: s_0, s_1, then s_{j,k} level by level.
  std::size_t size() const noexcept { return (std::size_t{1} << depth_) + 1; }
  double eval(std::size_t index, double t) const;
  // (steps+1) x size() matrix of basis values at t = i/steps.
  Tensor design_matrix(std::size_t steps) const;

 private:
  std::size_t depth_;
};

struct GeodesicPath {
  std::size_t depth = 0;
  // size() x (m+n); row 0 is c_0, row 1 is c_1, rows 2.. the hat coefficients.
  Tensor coefficients;

  std::size_t dim() const { return coefficients.cols(); }
  std::size_t coefficient_count() const { return coefficients.size(); }
};

// Straight path start -> (f1, b2): c_0 = start, c_1 = (0, b2 - b1), no hats.
GeodesicPath straight_path(const LatentPoint& start, std::span<const double> b2,
                           std::size_t depth);

std::vector<double> path_eval(const GeodesicPath& path, double t);

// (f1, b1) -> (f1, b2).
LatentPoint naive_transport(const LatentPoint& start, std::span<const double> b2);

enum class OptimizerKind { kRmsprop, kAdam, kGradientDescent };
std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct SolverConfig {
  std::size_t depth = 6;
  double dt = 1.0 / 256.0;
  double lambda_reg = 0.0;
  double learning_rate = 1e-2;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-6;
  std::size_t window = 50;
  OptimizerKind optimizer = OptimizerKind::kRmsprop;
  double rms_decay = 0.99;
  double eps = 1e-8;
  // Multiplies the step size whenever the loss has not reached a new best
  // for `patience` iterations.
  double lr_decay = 0.5;
  std::size_t patience = 10;
  bool keep_trace = true;

  void validate() const;
};

struct TransportResult {
  LatentPoint endpoint;
  double energy = 0.0;          // E_dt of the returned path
  double initial_energy = 0.0;  // E_dt of the naive straight path
  double loss = 0.0;            // energy + lambda_reg * ||gamma(1) - naive||^2
  double length = 0.0;          // sum of decoded chord lengths
  std::vector<double> segment_energies;
  double residual = 0.0;        // constant_speed_residual(segment_energies)
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t boundary_excursions = 0;
  GeodesicPath path;
  // (1/dt + 1) x (m+n) samples of gamma at t = k dt, when requested.
  std::optional<Tensor> trace;
  double dt = 0.0;
};

// Minimizes E_dt(gamma) + lambda_reg ||gamma(1) - (f1, b2)||^2 over the free
// coefficients, starting from the naive straight path. Returns the best
// iterate seen; never throws for non-convergence (converged = false).
// Throws NonFiniteError when the energy becomes non-finite.
TransportResult solve_geodesic(const LatentDecoder& decoder,
                               const LatentPoint& start,
                               std::span<const double> b2,
                               const SolverConfig& config);

// (max - min) / mean of the segment energies; 0 for an all-zero vector.
double constant_speed_residual(std::span<const double> segment_energies);

// Independent solves per start (all on the same base b1), order preserved.
// `jobs` = 0 uses the available hardware parallelism.
std::vector<TransportResult> correspondence_map(
    const LatentDecoder& decoder, std::span<const LatentPoint> starts,
    std::span<const double> b2, const SolverConfig& config,
    std::size_t jobs = 0);

// Decoded samples at `frames` equally spaced times in [0,1] (t = 0 only
// when frames == 1). Requires result.trace.
std::vector<std::vector<double>> interpolate(const nn::FAEModel& model,
                                             const TransportResult& result,
                                             std::size_t frames);
std::vector<std::vector<double>> interpolate(const LatentDecoder& decoder,
                                             const TransportResult& result,
                                             std::size_t frames);

// Header t,z_0..z_{L-1},seg_energy; the last row has an empty seg_energy.
std::string path_trace_csv(const TransportResult& result);
// Header start_f_0..,end_f_0..,energy,residual,converged.
// `fiber_dim` sizes the header when `starts` is empty.
std::string correspondence_csv(std::span<const LatentPoint> starts,
                               std::span<const TransportResult> results,
                               std::size_t fiber_dim = 1);

}  // namespace fibrae::geodesic

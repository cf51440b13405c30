#pragma once

// Pullback geometry of a decoder Psi: latent (f, b) -> sample space.
// The metric at p is g(p) = J(p)^T J(p) with J the decoder Jacobian, and a
// sampled path gamma_0..gamma_T (T = 1/dt) has discrete energy
//   E_dt = sum_k ||Psi(gamma_{k+1}) - Psi(gamma_k)||^2 / dt.
// No 1/2 factor: for a constant-speed path E_dt equals the squared length.

#include <functional>
#include <span>
#include <vector>

#include "fibrae/autodiff.hpp"
#include "fibrae/nn.hpp"
#include "fibrae/tensor.hpp"

namespace fibrae::geometry {

struct LatentPoint {
  std::vector<double> f;
  std::vector<double> b;

  std::size_t dim() const { return f.size() + b.size(); }
  std::vector<double> joined() const;
  static LatentPoint split(std::span<const double> z, std::size_t fiber_dim);
};

// A smooth map from latent coordinates to sample space, evaluated on a tape
// so that both Jacobians and path-energy gradients come from autodiff.
class LatentDecoder {
 public:
  virtual ~LatentDecoder() = default;
  virtual std::size_t fiber_dim() const = 0;
  virtual std::size_t base_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  // `latent` is (latent_dim) or (rows x latent_dim); result has output_dim
  // columns and the same number of rows.
  virtual ad::Var forward(ad::Var latent) const = 0;

  std::size_t latent_dim() const { return fiber_dim() + base_dim(); }
  Tensor decode(const Tensor& latent) const;
  std::vector<double> decode(const LatentPoint& p) const;
};

// Decoder half of a trained FAE; fiber coordinates are clamped to [-1,1].
class FAEDecoder final : public LatentDecoder {
 public:
  explicit FAEDecoder(const nn::FAEModel& model) : model_(&model) {}
  std::size_t fiber_dim() const override { return model_->arch.fiber_dim; }
  std::size_t base_dim() const override { return model_->arch.base_dim; }
  std::size_t output_dim() const override { return model_->arch.input_dim; }
  ad::Var forward(ad::Var latent) const override;

 private:
  const nn::FAEModel* model_;
};

// Psi(z) = A z with A of shape D x (m + n), columns ordered [A_f | A_b].
class LinearDecoder final : public LatentDecoder {
 public:
  LinearDecoder(Tensor a, std::size_t fiber_dim);
  std::size_t fiber_dim() const override { return fiber_dim_; }
  std::size_t base_dim() const override { return a_.cols() - fiber_dim_; }
  std::size_t output_dim() const override { return a_.rows(); }
  ad::Var forward(ad::Var latent) const override;
  const Tensor& matrix() const { return a_; }

 private:
  Tensor a_;
  std::size_t fiber_dim_;
};

// Unit sphere chart Psi(u, v) = (cos u cos v, cos u sin v, sin u) with the
// latitude u as fiber and the longitude v as base; g = diag(1, cos^2 u).
class SphereDecoder final : public LatentDecoder {
 public:
  std::size_t fiber_dim() const override { return 1; }
  std::size_t base_dim() const override { return 1; }
  std::size_t output_dim() const override { return 3; }
  ad::Var forward(ad::Var latent) const override;
};

class IdentityDecoder final : public LatentDecoder {
 public:
  IdentityDecoder(std::size_t fiber_dim, std::size_t base_dim)
      : m_(fiber_dim), n_(base_dim) {}
  std::size_t fiber_dim() const override { return m_; }
  std::size_t base_dim() const override { return n_; }
  std::size_t output_dim() const override { return m_ + n_; }
  ad::Var forward(ad::Var latent) const override { return latent; }

 private:
  std::size_t m_, n_;
};

// Columns [begin, end) of a rank-1 or rank-2 latent variable.
ad::Var latent_columns(ad::Var latent, std::size_t begin, std::size_t end);

// Exact D x (m+n) Jacobian, using forward tangents per latent coordinate or
// reverse sweeps per output coordinate, whichever needs fewer sweeps.
Tensor jacobian(const LatentDecoder& decoder, const LatentPoint& p);

// g(p) = J^T J, an (m+n) x (m+n) symmetric PSD matrix.
Tensor pullback_metric(const LatentDecoder& decoder, const LatentPoint& p);

// `path` holds 1/dt + 1 latent points as rows.
double discrete_energy(const LatentDecoder& decoder, const Tensor& path,
                       double dt);
std::vector<double> segment_energies(const LatentDecoder& decoder,
                                     const Tensor& path, double dt);
Tensor path_matrix(std::span<const LatentPoint> points);

// Number of Riemann-sum steps 1/dt; throws unless it is a positive integer.
std::size_t steps_for(double dt);

struct ConditionReport {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double c_estimate = 0.0;  // max(lambda_max, 1/lambda_min)
  // Set when some sampled metric is numerically singular.
  bool degenerate = false;
};

ConditionReport metric_condition_report(const LatentDecoder& decoder,
                                        std::span<const LatentPoint> samples);

using ScalarPath = std::function<double(double)>;

// phi(0) chi(0) + int_0^1 phi' chi'. The quadrature grid is the dyadic
// refinement with spacing <= `step`; derivatives are central differences at
// cell midpoints, integrated with the midpoint rule. Exact for functions
// that are piecewise linear on that grid.
double h1_inner_product(const ScalarPath& phi, const ScalarPath& chi,
                        double step);

}  // namespace fibrae::geometry

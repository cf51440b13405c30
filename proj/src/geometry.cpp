#include "fibrae/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace fibrae::geometry {

std::vector<double> LatentPoint::joined() const {
  std::vector<double> z(f);
  z.insert(z.end(), b.begin(), b.end());
  return z;
}

LatentPoint LatentPoint::split(std::span<const double> z,
                               std::size_t fiber_dim) {
  if (fiber_dim > z.size()) throw ShapeError("latent point shorter than fiber");
  return {{z.begin(), z.begin() + static_cast<std::ptrdiff_t>(fiber_dim)},
          {z.begin() + static_cast<std::ptrdiff_t>(fiber_dim), z.end()}};
}

Tensor LatentDecoder::decode(const Tensor& latent) const {
  ad::Tape tape;
  return forward(tape.constant(latent)).value();
}

std::vector<double> LatentDecoder::decode(const LatentPoint& p) const {
  return decode(Tensor::vector(p.joined())).storage();
}

ad::Var latent_columns(ad::Var latent, std::size_t begin, std::size_t end) {
  return ad::slice(latent, latent.value().rank() - 1, begin, end);
}

namespace {

void check_latent(const LatentDecoder& d, ad::Var latent) {
  if (latent.value().cols() != d.latent_dim()) {
    throw ShapeError("decoder expects latent dimension " +
                     std::to_string(d.latent_dim()) + ", got " +
                     shape_string(latent.shape()));
  }
}

}  // namespace

ad::Var FAEDecoder::forward(ad::Var latent) const {
  check_latent(*this, latent);
  const std::size_t m = fiber_dim();
  auto f = ad::clamp(latent_columns(latent, 0, m), -1.0, 1.0);
  auto b = latent_columns(latent, m, latent_dim());
  auto layers = nn::bind_layers(*latent.tape, model_->decoder, false);
  return nn::apply_decoder(layers, f, b, model_->arch.decoder_skips);
}

LinearDecoder::LinearDecoder(Tensor a, std::size_t fiber_dim)
    : a_(std::move(a)), fiber_dim_(fiber_dim) {
  if (a_.rank() != 2 || fiber_dim_ == 0 || fiber_dim_ >= a_.cols()) {
    throw ShapeError("linear decoder needs a D x (m+n) matrix with m, n >= 1");
  }
}

ad::Var LinearDecoder::forward(ad::Var latent) const {
  check_latent(*this, latent);
  return ad::matmul_transposed(latent, latent.tape->constant(a_));
}

ad::Var SphereDecoder::forward(ad::Var latent) const {
  check_latent(*this, latent);
  auto u = latent_columns(latent, 0, 1);
  auto v = latent_columns(latent, 1, 2);
  auto cu = ad::cos(u);
  return ad::concat({cu * ad::cos(v), cu * ad::sin(v), ad::sin(u)});
}

Tensor jacobian(const LatentDecoder& decoder, const LatentPoint& p) {
  const std::size_t l = decoder.latent_dim();
  if (p.f.size() != decoder.fiber_dim() || p.b.size() != decoder.base_dim()) {
    throw ShapeError("latent point does not match decoder dimensions");
  }
  ad::Tape tape;
  auto z = tape.parameter(Tensor::vector(p.joined()));
  auto out = decoder.forward(z);
  const std::size_t d = out.value().size();
  Tensor jac(Shape{d, l}, 0.0);
  if (l <= d) {
    for (std::size_t j = 0; j < l; ++j) {
      Tensor dir(Shape{l}, 0.0);
      dir[j] = 1.0;
      std::pair<ad::Var, Tensor> seed{z, std::move(dir)};
      const Tensor col = tape.tangent(out, std::span(&seed, 1));
      for (std::size_t i = 0; i < d; ++i) jac(i, j) = col[i];
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) {
      Tensor e(out.shape(), 0.0);
      e[i] = 1.0;
      const Tensor row = tape.backward(out, e)[z];
      for (std::size_t j = 0; j < l; ++j) jac(i, j) = row[j];
    }
  }
  if (!jac.all_finite()) throw NonFiniteError("non-finite Jacobian entry");
  return jac;
}

Tensor pullback_metric(const LatentDecoder& decoder, const LatentPoint& p) {
  const Tensor jac = jacobian(decoder, p);
  const std::size_t d = jac.rows(), l = jac.cols();
  Tensor g(Shape{l, l}, 0.0);
  for (std::size_t a = 0; a < l; ++a) {
    for (std::size_t b = a; b < l; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += jac(i, a) * jac(i, b);
      g(a, b) = s;
      g(b, a) = s;
    }
  }
  return g;
}

std::size_t steps_for(double dt) {
  if (!(dt > 0.0) || dt > 1.0) throw std::invalid_argument("dt must lie in (0, 1]");
  const double inv = 1.0 / dt;
  const double rounded = std::round(inv);
  if (std::abs(inv - rounded) > 1e-9 * rounded) {
    throw std::invalid_argument("1/dt must be a positive integer");
  }
  return static_cast<std::size_t>(rounded);
}

std::vector<double> segment_energies(const LatentDecoder& decoder,
                                     const Tensor& path, double dt) {
  const std::size_t steps = steps_for(dt);
  if (path.rank() != 2 || path.rows() != steps + 1) {
    throw ShapeError("path has " + std::to_string(path.rows()) +
                                " points, expected 1/dt + 1 = " +
                                std::to_string(steps + 1));
  }
  const Tensor out = decoder.decode(path);
  const std::size_t d = out.cols();
  std::vector<double> seg(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = out(k + 1, i) - out(k, i);
      s += diff * diff;
    }
    seg[k] = s / dt;
  }
  return seg;
}

double discrete_energy(const LatentDecoder& decoder, const Tensor& path,
                       double dt) {
  double e = 0.0;
  for (double s : segment_energies(decoder, path, dt)) e += s;
  return e;
}

Tensor path_matrix(std::span<const LatentPoint> points) {
  if (points.empty()) throw std::invalid_argument("empty path");
  const std::size_t l = points.front().dim();
  Tensor out(Shape{points.size(), l});
  for (std::size_t r = 0; r < points.size(); ++r) {
    if (points[r].dim() != l) throw ShapeError("path points differ in dimension");
    auto z = points[r].joined();
    for (std::size_t c = 0; c < l; ++c) out(r, c) = z[c];
  }
  return out;
}

ConditionReport metric_condition_report(const LatentDecoder& decoder,
                                        std::span<const LatentPoint> samples) {
  if (samples.empty()) throw std::invalid_argument("empty sample for metric report");
  ConditionReport rep;
  rep.lambda_min = std::numeric_limits<double>::infinity();
  rep.lambda_max = 0.0;
  for (const auto& p : samples) {
    const Tensor g = pullback_metric(decoder, p);
    const auto l = static_cast<Eigen::Index>(g.rows());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        gm(g.values().data(), l, l);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gm, Eigen::EigenvaluesOnly);
    rep.lambda_min = std::min(rep.lambda_min, eig.eigenvalues().minCoeff());
    rep.lambda_max = std::max(rep.lambda_max, eig.eigenvalues().maxCoeff());
  }
  rep.degenerate = rep.lambda_min <= 1e-12 * std::max(1.0, rep.lambda_max);
  rep.c_estimate = rep.degenerate
                       ? std::numeric_limits<double>::infinity()
                       : std::max(rep.lambda_max, 1.0 / rep.lambda_min);
  return rep;
}

double h1_inner_product(const ScalarPath& phi, const ScalarPath& chi,
                        double step) {
  if (!(step > 0.0)) throw std::invalid_argument("quadrature step must be > 0");
  std::size_t cells = 1;
  while (1.0 / static_cast<double>(cells) > step) cells *= 2;
  const double h = 1.0 / static_cast<double>(cells);
  double integral = 0.0;
  double phi_prev = phi(0.0), chi_prev = chi(0.0);
  const double boundary = phi_prev * chi_prev;
  for (std::size_t i = 1; i <= cells; ++i) {
    const double t = static_cast<double>(i) * h;
    const double phi_next = phi(t), chi_next = chi(t);
    integral += (phi_next - phi_prev) * (chi_next - chi_prev) / h;
    phi_prev = phi_next;
    chi_prev = chi_next;
  }
  return boundary + integral;
}

}  // namespace fibrae::geometry

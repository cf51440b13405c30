#include "fibrae/geodesic.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace fibrae::geodesic {

double basis_eval(std::size_t j, std::size_t k, double t) {
  if (j >= 62 || k >= (std::size_t{1} << j)) {
    throw std::out_of_range(fmt::format("hat index (j={}, k={}) out of range", j, k));
  }
  const double width = std::ldexp(1.0, -static_cast<int>(j));
  const double lo = static_cast<double>(k) * width;
  const double hi = lo + width;
  if (t <= lo || t >= hi) return 0.0;
  const double mid = lo + 0.5 * width;
  const double amp = std::sqrt(std::ldexp(1.0, static_cast<int>(j)));
  return t < mid ? amp * (t - lo) : amp * (hi - t);
}

FaberSchauderBasis::FaberSchauderBasis(std::size_t depth) : depth_(depth) {
  if (depth > 30) throw std::invalid_argument("basis depth too large");
}

double FaberSchauderBasis::eval(std::size_t index, double t) const {
  if (index == 0) return 1.0;
  if (index == 1) return t;
  if (index >= size()) throw std::out_of_range("basis index out of range");
  const std::size_t i = index - 2;
  std::size_t j = 0;
  while ((std::size_t{2} << j) - 1 <= i) ++j;
  const std::size_t k = i - ((std::size_t{1} << j) - 1);
  return basis_eval(j, k, t);
}

Tensor FaberSchauderBasis::design_matrix(std::size_t steps) const {
  Tensor out(Shape{steps + 1, size()}, 0.0);
  for (std::size_t r = 0; r <= steps; ++r) {
    const double t = static_cast<double>(r) / static_cast<double>(steps);
    for (std::size_t c = 0; c < size(); ++c) out(r, c) = eval(c, t);
  }
  return out;
}

LatentPoint naive_transport(const LatentPoint& start, std::span<const double> b2) {
  if (b2.size() != start.b.size()) {
    throw ShapeError("target base has dimension " + std::to_string(b2.size()) +
                     ", start base " + std::to_string(start.b.size()));
  }
  return {start.f, {b2.begin(), b2.end()}};
}

GeodesicPath straight_path(const LatentPoint& start, std::span<const double> b2,
                           std::size_t depth) {
  const FaberSchauderBasis basis(depth);
  const std::size_t m = start.f.size(), l = start.dim();
  if (b2.size() != start.b.size()) throw ShapeError("target base dimension mismatch");
  GeodesicPath path{depth, Tensor(Shape{basis.size(), l}, 0.0)};
  const auto z = start.joined();
  for (std::size_t c = 0; c < l; ++c) path.coefficients(0, c) = z[c];
  for (std::size_t c = m; c < l; ++c) {
    const double b1 = z[c], target = b2[c - m];
    // pick the increment so that b1 + increment rounds to exactly b2
    double inc = target - b1;
    for (int tries = 0; tries < 8 && b1 + inc != target; ++tries) {
      inc = std::nextafter(inc, b1 + inc < target ? INFINITY : -INFINITY);
    }
    if (b1 + inc != target) {
      spdlog::debug("base endpoint {} not exactly representable from {}", target, b1);
    }
    path.coefficients(1, c) = inc;
  }
  return path;
}

std::vector<double> path_eval(const GeodesicPath& path, double t) {
  const FaberSchauderBasis basis(path.depth);
  const std::size_t l = path.dim();
  if (path.coefficients.rows() != basis.size()) {
    throw ShapeError("path coefficient rows do not match basis size");
  }
  std::vector<double> z(l, 0.0);
  for (std::size_t r = 0; r < basis.size(); ++r) {
    const double s = basis.eval(r, t);
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < l; ++c) z[c] += s * path.coefficients(r, c);
  }
  return z;
}

std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kRmsprop: return "rmsprop";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kGradientDescent: return "sgd";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "rmsprop") return OptimizerKind::kRmsprop;
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kGradientDescent;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

void SolverConfig::validate() const {
  const std::size_t steps = geometry::steps_for(dt);
  if ((steps & (steps - 1)) != 0) {
    throw std::invalid_argument("dt must be a negative power of two");
  }
  if (depth > 30 || (std::size_t{1} << depth) > steps) {
    throw std::invalid_argument(
        fmt::format("dt * 2^N must be <= 1 (dt = {}, N = {})", dt, depth));
  }
  if (!(lambda_reg >= 0.0)) throw std::invalid_argument("lambda_reg must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("tolerance must be >= 0");
  if (window == 0) throw std::invalid_argument("window must be positive");
  if (!(rms_decay > 0.0 && rms_decay < 1.0)) {
    throw std::invalid_argument("rms_decay must lie in (0,1)");
  }
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw std::invalid_argument("lr_decay must lie in (0,1]");
  }
}

double constant_speed_residual(std::span<const double> seg) {
  if (seg.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(seg.begin(), seg.end());
  double mean = 0.0;
  for (double s : seg) mean += s;
  mean /= static_cast<double>(seg.size());
  if (*hi == 0.0) return 0.0;
  if (mean == 0.0) return std::numeric_limits<double>::infinity();
  return (*hi - *lo) / mean;
}

namespace {

struct Objective {
  double loss;
  double energy;
};

// First-order optimizer over the free coefficients only.
class Stepper {
 public:
  Stepper(const SolverConfig& cfg, std::size_t n)
      : cfg_(cfg), first_(n, 0.0), second_(n, 0.0), rate_(cfg.learning_rate) {}

  void step(std::span<double> x, std::span<const double> g,
            std::span<const char> free) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!free[i]) continue;
      switch (cfg_.optimizer) {
        case OptimizerKind::kRmsprop:
          second_[i] = cfg_.rms_decay * second_[i] +
                       (1.0 - cfg_.rms_decay) * g[i] * g[i];
          x[i] -= rate_ * g[i] / (std::sqrt(second_[i]) + cfg_.eps);
          break;
        case OptimizerKind::kAdam: {
          first_[i] = b1 * first_[i] + (1.0 - b1) * g[i];
          second_[i] = b2 * second_[i] + (1.0 - b2) * g[i] * g[i];
          const double mh = first_[i] / (1.0 - std::pow(b1, double(t_)));
          const double vh = second_[i] / (1.0 - std::pow(b2, double(t_)));
          x[i] -= rate_ * mh / (std::sqrt(vh) + cfg_.eps);
          break;
        }
        case OptimizerKind::kGradientDescent:
          x[i] -= rate_ * g[i];
          break;
      }
    }
  }

  void decay() { rate_ *= cfg_.lr_decay; }
  double rate() const { return rate_; }

 private:
  const SolverConfig& cfg_;
  std::vector<double> first_, second_;
  double rate_;
  std::size_t t_ = 0;
};

}  // namespace

TransportResult solve_geodesic(const LatentDecoder& decoder,
                               const LatentPoint& start,
                               std::span<const double> b2,
                               const SolverConfig& config) {
  config.validate();
  const std::size_t m = decoder.fiber_dim(), l = decoder.latent_dim();
  if (start.f.size() != m || start.b.size() != decoder.base_dim() ||
      b2.size() != decoder.base_dim()) {
    throw ShapeError("start point / target base do not match decoder dimensions");
  }
  const std::size_t steps = geometry::steps_for(config.dt);
  const FaberSchauderBasis basis(config.depth);
  // Optimize in the equivalent nodal form: row 0 weights 1 - t (start),
  // row 1 weights t (endpoint). Both endpoints are then reproduced bit-exactly
  // by the sampled path, since the other weights vanish there.
  Tensor design = basis.design_matrix(steps);
  for (std::size_t r = 0; r <= steps; ++r) design(r, 0) -= design(r, 1);
  const double inv_dt = 1.0 / config.dt;

  GeodesicPath path = straight_path(start, b2, config.depth);
  Tensor coeff = path.coefficients;
  const auto z1 = start.joined();
  for (std::size_t c = 0; c < l; ++c) {
    coeff(1, c) = c < m ? z1[c] : b2[c - m];
  }
  const Tensor anchor(Shape{1, m}, start.f);
  std::vector<char> free(coeff.size(), 0);
  for (std::size_t r = 1; r < basis.size(); ++r) {
    for (std::size_t c = 0; c < l; ++c) {
      free[r * l + c] = (r >= 2 || c < m) ? 1 : 0;
    }
  }

  auto evaluate = [&](const Tensor& c, Tensor* grad) -> Objective {
    ad::Tape tape;
    auto cv = tape.parameter(c);
    auto points = ad::matmul(tape.constant(design), cv);
    auto out = decoder.forward(points);
    auto diff = ad::slice(out, 0, 1, steps + 1) - ad::slice(out, 0, 0, steps);
    auto energy = ad::scale(ad::squared_norm(diff), inv_dt);
    auto loss = energy;
    if (config.lambda_reg > 0.0) {
      auto drift = ad::slice(ad::slice(cv, 0, 1, 2), 1, 0, m) -
                   tape.constant(anchor);
      loss = energy + ad::scale(ad::squared_norm(drift), config.lambda_reg);
    }
    const Objective obj{loss.value().item(), energy.value().item()};
    if (!std::isfinite(obj.loss)) {
      throw NonFiniteError(fmt::format("non-finite path energy {}", obj.loss));
    }
    if (grad != nullptr) *grad = tape.backward(loss)[cv];
    return obj;
  };

  TransportResult result;
  result.dt = config.dt;
  Tensor grad;
  Objective current = evaluate(coeff, &grad);
  result.initial_energy = current.energy;
  Tensor best = coeff;
  double best_loss = current.loss;
  std::vector<double> best_history{best_loss};
  std::size_t since_best = 0;
  Stepper stepper(config, coeff.size());

  std::size_t it = 0;
  for (; it < config.max_iterations; ++it) {
    double gnorm = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (free[i]) gnorm += grad[i] * grad[i];
    }
    if (gnorm == 0.0) {
      result.converged = true;
      break;
    }
    if (best_history.size() > config.window) {
      const double old = best_history[best_history.size() - 1 - config.window];
      const double rel = (old - best_loss) / std::max(std::abs(old), 1e-300);
      if (rel < config.tolerance) {
        result.converged = true;
        break;
      }
    }
    stepper.step(coeff.values(), grad.values(), free);
    try {
      current = evaluate(coeff, &grad);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(fmt::format("{} at iteration {}", e.what(), it + 1));
    }
    if (current.loss < best_loss) {
      best_loss = current.loss;
      best = coeff;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      stepper.decay();
      since_best = 0;
    }
    best_history.push_back(best_loss);
  }
  result.iterations = it;

  coeff = best;
  const Tensor points = [&] {
    ad::Tape tape;
    return ad::matmul(tape.constant(design), tape.constant(coeff)).value();
  }();
  result.segment_energies = geometry::segment_energies(decoder, points, config.dt);
  result.energy = 0.0;
  result.length = 0.0;
  for (double s : result.segment_energies) {
    result.energy += s;
    result.length += std::sqrt(s * config.dt);
  }
  result.loss = best_loss;
  result.residual = constant_speed_residual(result.segment_energies);
  for (std::size_t r = 0; r < points.rows(); ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      if (points(r, c) < -1.0 || points(r, c) > 1.0) {
        ++result.boundary_excursions;
        break;
      }
    }
  }
  result.endpoint = LatentPoint::split(coeff.row(1), m);
  for (std::size_t r = 0; r < coeff.rows(); ++r) {
    for (std::size_t c = 0; c < l; ++c) {
      path.coefficients(r, c) = r == 1 ? coeff(1, c) - coeff(0, c) : coeff(r, c);
    }
  }
  result.path = std::move(path);
  if (config.keep_trace) result.trace = points;
  if (!result.converged) {
    spdlog::info("geodesic solve stopped after {} iterations without converging",
                 result.iterations);
  }
  return result;
}

std::vector<TransportResult> correspondence_map(
    const LatentDecoder& decoder, std::span<const LatentPoint> starts,
    std::span<const double> b2, const SolverConfig& config, std::size_t jobs) {
  config.validate();
  std::vector<TransportResult> results(starts.size());
  if (starts.empty()) return results;
  for (const auto& s : starts) {
    if (s.b != starts.front().b) {
      throw std::invalid_argument("correspondence_map: starts lie on different fibers");
    }
  }
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, starts.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < starts.size(); i = next++) {
      try {
        results[i] = solve_geodesic(decoder, starts[i], b2, config);
      } catch (const NonFiniteError& e) {
        spdlog::warn("transport of point {} failed: {}", i, e.what());
        TransportResult failed;
        failed.endpoint = naive_transport(starts[i], b2);
        failed.energy = std::numeric_limits<double>::quiet_NaN();
        failed.residual = std::numeric_limits<double>::quiet_NaN();
        failed.converged = false;
        results[i] = std::move(failed);
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return results;
}

std::vector<std::vector<double>> interpolate(const LatentDecoder& decoder,
                                             const TransportResult& result,
                                             std::size_t frames) {
  if (!result.trace) throw std::invalid_argument("transport result carries no path trace");
  if (frames == 0) return {};
  const Tensor& trace = *result.trace;
  const std::size_t steps = trace.rows() - 1, l = trace.cols();
  Tensor samples(Shape{frames, l}, 0.0);
  for (std::size_t i = 0; i < frames; ++i) {
    const double t =
        frames == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(frames - 1);
    // the path is piecewise linear between trace samples
    const double pos = t * static_cast<double>(steps);
    const std::size_t k = std::min(static_cast<std::size_t>(pos), steps);
    const double w = pos - static_cast<double>(k);
    for (std::size_t c = 0; c < l; ++c) {
      samples(i, c) = w == 0.0 ? trace(k, c)
                               : (1.0 - w) * trace(k, c) + w * trace(k + 1, c);
    }
  }
  const Tensor decoded = decoder.decode(samples);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < frames; ++i) out.push_back(decoded.row(i));
  return out;
}

std::vector<std::vector<double>> interpolate(const nn::FAEModel& model,
                                             const TransportResult& result,
                                             std::size_t frames) {
  return interpolate(geometry::FAEDecoder(model), result, frames);
}

std::string path_trace_csv(const TransportResult& result) {
  if (!result.trace) throw std::invalid_argument("transport result carries no path trace");
  const Tensor& trace = *result.trace;
  const std::size_t steps = trace.rows() - 1, l = trace.cols();
  std::string out = "t";
  for (std::size_t c = 0; c < l; ++c) out += fmt::format(",z_{}", c);
  out += ",seg_energy\n";
  for (std::size_t r = 0; r <= steps; ++r) {
    out += fmt::format("{}", static_cast<double>(r) / static_cast<double>(steps));
    for (std::size_t c = 0; c < l; ++c) out += fmt::format(",{}", trace(r, c));
    if (r < steps) {
      out += fmt::format(",{}\n", result.segment_energies[r]);
    } else {
      out += ",\n";
    }
  }
  return out;
}

std::string correspondence_csv(std::span<const LatentPoint> starts,
                               std::span<const TransportResult> results,
                               std::size_t fiber_dim) {
  if (starts.size() != results.size()) {
    throw std::invalid_argument("correspondence_csv: starts/results size mismatch");
  }
  const std::size_t m = starts.empty() ? fiber_dim : starts.front().f.size();
  std::string out;
  for (std::size_t c = 0; c < m; ++c) out += fmt::format("start_f_{},", c);
  for (std::size_t c = 0; c < m; ++c) out += fmt::format("end_f_{},", c);
  out += "energy,residual,converged\n";
  for (std::size_t i = 0; i < starts.size(); ++i) {
    for (double v : starts[i].f) out += fmt::format("{},", v);
    for (double v : results[i].endpoint.f) out += fmt::format("{},", v);
    out += fmt::format("{},{},{}\n", results[i].energy, results[i].residual,
                       results[i].converged ? 1 : 0);
  }
  return out;
}

}  // namespace fibrae::geodesic

#include "fibrae/metrics.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace fibrae::metrics {

void LabeledCloud::validate() const {
  if (points.rank() != 2 || points.rows() == 0 || points.cols() == 0) {
    throw ShapeError("point cloud must be a non-empty N x d matrix, got " +
                     shape_string(points.shape()));
  }
  if (labels.size() != points.rows()) {
    throw ShapeError(fmt::format("{} labels for {} points", labels.size(),
                                 points.rows()));
  }
  for (std::size_t l : labels) {
    if (l >= groups) {
      throw std::out_of_range(fmt::format("label {} >= group count {}", l, groups));
    }
  }
}

LabeledCloud make_cloud(Tensor points, std::vector<std::size_t> labels) {
  const std::size_t groups =
      labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  LabeledCloud cloud{std::move(points), std::move(labels), groups};
  cloud.validate();
  return cloud;
}

namespace {

struct PointScore {
  double score;
  bool converged;
};

PointScore simpson_at(const LabeledCloud& cloud, std::size_t i, std::size_t k,
                      double perplexity, std::vector<std::pair<double, std::size_t>>& buf) {
  const std::size_t n = cloud.points.rows(), d = cloud.points.cols();
  buf.clear();
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = cloud.points(i, c) - cloud.points(j, c);
      s += diff * diff;
    }
    buf.emplace_back(s, j);
  }
  std::partial_sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k), buf.end());
  const double dmin = buf.front().first;

  // entropy is shift invariant, so distances are taken relative to the nearest
  std::vector<double> p(k);
  const double target = std::log(perplexity);
  double beta = 1.0, lo = -std::numeric_limits<double>::infinity(),
         hi = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    double sum = 0.0, weighted = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      p[q] = std::exp(-(buf[q].first - dmin) * beta);
      sum += p[q];
      weighted += (buf[q].first - dmin) * p[q];
    }
    const double h = std::log(sum) + beta * weighted / sum;
    for (double& v : p) v /= sum;
    const double gap = h - target;
    if (std::abs(gap) < 1e-5) {
      converged = true;
      break;
    }
    if (gap > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = std::isinf(lo) ? beta / 2.0 : 0.5 * (beta + lo);
    }
  }
  std::vector<double> mass(cloud.groups, 0.0);
  for (std::size_t q = 0; q < k; ++q) mass[cloud.labels[buf[q].second]] += p[q];
  double simpson = 0.0;
  for (double m : mass) simpson += m * m;
  return {1.0 / simpson, converged};
}

}  // namespace

std::vector<double> lisi(const LabeledCloud& cloud, double perplexity,
                         std::size_t jobs) {
  cloud.validate();
  if (!(perplexity > 1.0)) throw std::invalid_argument("perplexity must be > 1");
  const std::size_t n = cloud.points.rows();
  if (!(static_cast<double>(n) > perplexity)) {
    throw std::invalid_argument(
        fmt::format("LISI needs more points ({}) than the perplexity ({})", n, perplexity));
  }
  const std::size_t k =
      std::min(n - 1, static_cast<std::size_t>(std::floor(3.0 * perplexity)));

  std::vector<double> scores(n);
  std::atomic<std::size_t> next{0}, failures{0};
  auto worker = [&] {
    std::vector<std::pair<double, std::size_t>> buf;
    buf.reserve(n);
    for (std::size_t i = next++; i < n; i = next++) {
      const auto r = simpson_at(cloud, i, k, perplexity, buf);
      scores[i] = std::clamp(r.score, 1.0, static_cast<double>(cloud.groups));
      if (!r.converged) ++failures;
    }
  };
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failures > 0) {
    spdlog::warn("LISI bandwidth search failed at {} of {} points (tied distances); "
                 "their scores use the final kernel weights",
                 failures.load(), n);
  }
  return scores;
}

WardDecomposition ward_decomposition(const LabeledCloud& cloud) {
  cloud.validate();
  const std::size_t n = cloud.points.rows(), d = cloud.points.cols();
  const auto nd = static_cast<double>(n);
  std::vector<double> mean(d, 0.0);
  std::vector<std::vector<double>> gmean(cloud.groups, std::vector<double>(d, 0.0));
  std::vector<std::size_t> count(cloud.groups, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++count[cloud.labels[i]];
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] += cloud.points(i, c);
      gmean[cloud.labels[i]][c] += cloud.points(i, c);
    }
  }
  for (double& v : mean) v /= nd;
  for (std::size_t g = 0; g < cloud.groups; ++g) {
    if (count[g] == 0) continue;
    for (double& v : gmean[g]) v /= static_cast<double>(count[g]);
  }
  std::vector<double> gvar(cloud.groups, 0.0);
  WardDecomposition w;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& gm = gmean[cloud.labels[i]];
    for (std::size_t c = 0; c < d; ++c) {
      const double a = cloud.points(i, c) - mean[c];
      const double b = cloud.points(i, c) - gm[c];
      w.total += a * a;
      gvar[cloud.labels[i]] += b * b;
    }
  }
  w.total /= nd;
  std::size_t nonempty = 0;
  for (std::size_t g = 0; g < cloud.groups; ++g) {
    if (count[g] == 0) continue;
    ++nonempty;
    const auto ng = static_cast<double>(count[g]);
    double sep = 0.0;
    for (std::size_t c = 0; c < d; ++c) sep += (gmean[g][c] - mean[c]) * (gmean[g][c] - mean[c]);
    w.between += ng / nd * sep;
    w.within += gvar[g] / nd;
    w.between_unweighted += sep;
    w.within_unweighted += gvar[g] / ng;
  }
  w.between_unweighted /= static_cast<double>(nonempty);
  w.within_unweighted /= static_cast<double>(nonempty);
  return w;
}

nlohmann::json metrics_report(
    const Tensor& points,
    const std::map<std::string, std::vector<std::size_t>>& groupings,
    double perplexity, bool per_point, std::size_t jobs) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, labels] : groupings) {
    const auto cloud = make_cloud(points, labels);
    const auto scores = lisi(cloud, perplexity, jobs);
    const double mean =
        std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(scores.size());
    nlohmann::json l{{"mean", mean}, {"std", std::sqrt(var)}};
    if (per_point) l["per_point"] = scores;
    const auto w = ward_decomposition(cloud);
    out[name] = {{"lisi", l},
                 {"ward",
                  {{"total", w.total},
                   {"between", w.between},
                   {"within", w.within},
                   {"between_unweighted", w.between_unweighted},
                   {"within_unweighted", w.within_unweighted}}}};
  }
  return out;
}

}  // namespace fibrae::metrics

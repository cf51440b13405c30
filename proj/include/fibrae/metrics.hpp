#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fibrae/tensor.hpp"

namespace fibrae::metrics {

struct LabeledCloud {
  Tensor points;                    // N x d
  std::vector<std::size_t> labels;  // N ids in [0, groups)
  std::size_t groups = 0;

  void validate() const;
};

// Builds a cloud whose group count is 1 + the largest label.
LabeledCloud make_cloud(Tensor points, std::vector<std::size_t> labels);

// Local inverse Simpson index per point. Each point weighs its
// 3 * perplexity nearest neighbours (squared Euclidean distances) with a
// Gaussian kernel whose bandwidth is bisected until the weight entropy is
// log(perplexity); the score is 1 / sum_i p(i)^2 over label masses p(i).
std::vector<double> lisi(const LabeledCloud& cloud, double perplexity = 30.0,
                         std::size_t jobs = 0);

struct WardDecomposition {
  double total = 0.0;
  double between = 0.0;  // sum_j |G_j|/N ||m_j - m||^2
  double within = 0.0;   // sum_j |G_j|/N sigma_j^2
  // Plain averages over the k non-empty groups; these do not add up to
  // `total` when group sizes differ.
  double between_unweighted = 0.0;
  double within_unweighted = 0.0;
};

WardDecomposition ward_decomposition(const LabeledCloud& cloud);

// {"<grouping>": {"lisi": {"mean", "std", "per_point"?},
//                 "ward": {"total", "between", "within", ...}}, ...}
nlohmann::json metrics_report(
    const Tensor& points,
    const std::map<std::string, std::vector<std::size_t>>& groupings,
    double perplexity = 30.0, bool per_point = false, std::size_t jobs = 0);

}  // namespace fibrae::metrics

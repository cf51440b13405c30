#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fibrae/tensor.hpp"

namespace fibrae {

// Samples X (N x D, entries in [0,1] once normalized) with condition ids.
struct Dataset {
  Tensor x;
  std::vector<std::size_t> c;
  std::size_t conditions = 0;
  std::vector<std::string> condition_names;
  std::vector<std::string> feature_names;
  // Per-feature (min, max) of the raw data when normalize_minmax was applied.
  std::vector<std::pair<double, double>> feature_range;

  std::size_t size() const { return c.size(); }
  std::size_t dim() const { return x.cols(); }

  // Checks X in [0,1] (when `require_unit` is set), c < K, row counts.
  void validate(bool require_unit = true) const;
};

}  // namespace fibrae

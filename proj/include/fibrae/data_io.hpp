#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fibrae/dataset.hpp"
#include "fibrae/geodesic.hpp"
#include "fibrae/nn.hpp"
#include "fibrae/tensor.hpp"
#include "fibrae/training.hpp"

namespace fibrae::data_io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- CSV -------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws FormatError
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
double parse_number(std::string_view cell, std::size_t line, std::string_view column);

// Features are every column but `condition_column`; condition values are
// re-indexed densely in first-appearance order. No normalization.
Dataset load_csv(const std::filesystem::path& path, std::string_view condition_column);

// Comma-separated, header row, shortest round-trip numbers.
std::string to_csv(const std::vector<std::string>& header, const Tensor& rows);

// ---- IDX -------------------------------------------------------------------

// Pixels flattened row-major and scaled by 1/255; distinct labels become
// dense condition ids in increasing label order.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// ---- normalization ---------------------------------------------------------

struct Normalized {
  Tensor x;
  std::vector<std::pair<double, double>> range;  // per feature (min, max)
  std::vector<std::size_t> constant_features;    // mapped to 0
};

Normalized normalize_minmax(const Tensor& x);
Tensor inverse_minmax(const Tensor& x, const std::vector<std::pair<double, double>>& range);
// Normalizes ds.x in place and records ds.feature_range.
std::vector<std::size_t> normalize_dataset(Dataset& ds);

// ---- synthetic data --------------------------------------------------------

struct SyntheticSpec {
  std::size_t conditions = 3;
  std::size_t per_condition = 200;
  std::size_t dim = 20;
  std::uint64_t seed = 0;
  std::size_t factors = 2;     // shared within-condition factor dimension
  double separation = 1.0;     // scale of the condition means
  double noise = 0.05;
};

// x = mu_c + W z + noise, z ~ U[-1,1]^factors shared across conditions,
// then min-max normalized into [0,1]. Deterministic per seed.
Dataset make_synthetic(const SyntheticSpec& spec);

// ---- model archive ---------------------------------------------------------
// Layout: "FAE1", u8 version, u64 LE length L, L bytes of JSON architecture,
// then every parameter as a LE double, groups in the order encoder,
// embedding, decoder, adversary, classifier, discriminator; within a group
// weights (row-major) then bias per layer.

inline constexpr std::uint8_t kArchiveVersion = 1;

nlohmann::json architecture_json(const nn::FAEModel& model);
std::string serialize_model(const nn::FAEModel& model);
nn::FAEModel deserialize_model(std::string_view bytes);
void save_model(const nn::FAEModel& model, const std::filesystem::path& path);
nn::FAEModel load_model(const std::filesystem::path& path);

// ---- run configuration -----------------------------------------------------

struct DataSource {
  std::optional<std::string> csv;
  std::string condition_column = "condition";
  std::optional<std::string> idx_images;
  std::optional<std::string> idx_labels;
  std::optional<SyntheticSpec> synthetic;
};

struct RunConfig {
  DataSource data;
  // input_dim and conditions are taken from the data
  nn::Architecture arch = [] {
    nn::Architecture a;
    a.fiber_dim = 2;
    a.base_dim = 2;
    return a;
  }();
  training::TrainConfig train;
  geodesic::SolverConfig solver;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
};

// Unknown keys are rejected; absent keys keep their defaults. A top-level
// "seed" applies to training and synthetic data unless they set their own.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_json(const RunConfig& cfg);

// Loads the dataset named by `src` (normalized into [0,1]).
Dataset load_dataset(const DataSource& src);

}  // namespace fibrae::data_io

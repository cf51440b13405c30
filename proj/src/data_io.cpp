#include "fibrae/data_io.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <set>
#include <unordered_map>

#include "fibrae/io_util.hpp"

namespace fibrae::data_io {

using nlohmann::json;

// ---- CSV -------------------------------------------------------------------

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw FormatError(fmt::format("CSV has no column '{}'", name));
  }
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(std::string_view line, std::size_t lineno) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"' && cur.empty()) {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw FormatError(fmt::format("line {}: unterminated quote", lineno));
  cells.push_back(std::move(cur));
  return cells;
}

}  // namespace

CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::size_t lineno = 0, pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cells = split_line(line, lineno);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw FormatError(fmt::format("line {}: {} fields, header has {}", lineno,
                                    cells.size(), table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw FormatError("empty CSV (no header row)");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  try {
    return parse_csv(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

double parse_number(std::string_view cell, std::size_t line, std::string_view column) {
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw FormatError(fmt::format("line {}, column '{}': '{}' is not a number", line,
                                  column, cell));
  }
  return v;
}

Dataset load_csv(const std::filesystem::path& path, std::string_view condition_column) {
  const CsvTable t = read_csv(path);
  std::size_t cond_col = 0;
  try {
    cond_col = t.column(condition_column);
  } catch (const FormatError&) {
    throw FormatError(fmt::format("{}: missing condition column '{}'", path.string(),
                                  condition_column));
  }
  if (t.rows.empty()) throw FormatError(path.string() + ": no data rows");
  Dataset ds;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c != cond_col) ds.feature_names.push_back(t.header[c]);
  }
  if (ds.feature_names.empty()) throw FormatError(path.string() + ": no feature columns");
  ds.x = Tensor(Shape{t.rows.size(), ds.feature_names.size()});
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (c == cond_col) continue;
      ds.x(r, f++) = parse_number(t.rows[r][c], r + 2, t.header[c]);
    }
    const auto& label = t.rows[r][cond_col];
    auto [it, inserted] = ids.try_emplace(label, ds.condition_names.size());
    if (inserted) ds.condition_names.push_back(label);
    ds.c.push_back(it->second);
  }
  ds.conditions = ds.condition_names.size();
  ds.validate(false);
  return ds;
}

std::string to_csv(const std::vector<std::string>& header, const Tensor& rows) {
  if (rows.rank() == 2 && rows.cols() != header.size()) {
    throw ShapeError(fmt::format("{} header fields for {} columns", header.size(),
                                 rows.cols()));
  }
  std::string out = fmt::format("{}\n", fmt::join(header, ","));
  if (rows.rank() != 2) return out;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    for (std::size_t c = 0; c < rows.cols(); ++c) {
      if (c > 0) out += ',';
      out += fmt::format("{}", rows(r, c));
    }
    out += '\n';
  }
  return out;
}

// ---- IDX -------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::string_view bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size()) throw FormatError(what + ": truncated header");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::string img = read_file(images), lab = read_file(labels);
  const std::string iname = images.string(), lname = labels.string();
  if (const auto m = read_be32(img, 0, iname); m != 2051) {
    throw FormatError(fmt::format("{}: bad magic {} (expected 2051)", iname, m));
  }
  if (const auto m = read_be32(lab, 0, lname); m != 2049) {
    throw FormatError(fmt::format("{}: bad magic {} (expected 2049)", lname, m));
  }
  const std::size_t n = read_be32(img, 4, iname);
  const std::size_t rows = read_be32(img, 8, iname), cols = read_be32(img, 12, iname);
  const std::size_t nl = read_be32(lab, 4, lname);
  if (n != nl) {
    throw FormatError(fmt::format("{} images but {} labels", n, nl));
  }
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n * d) throw FormatError(iname + ": truncated pixel payload");
  if (lab.size() < 8 + n) throw FormatError(lname + ": truncated label payload");

  Dataset ds;
  ds.x = Tensor(Shape{n, d});
  for (std::size_t i = 0; i < n * d; ++i) {
    ds.x[i] = static_cast<unsigned char>(img[16 + i]) / 255.0;
  }
  std::set<int> distinct;
  for (std::size_t i = 0; i < n; ++i) distinct.insert(static_cast<unsigned char>(lab[8 + i]));
  std::map<int, std::size_t> ids;
  for (int v : distinct) {
    ids[v] = ds.condition_names.size();
    ds.condition_names.push_back(std::to_string(v));
  }
  for (std::size_t i = 0; i < n; ++i) ds.c.push_back(ids[static_cast<unsigned char>(lab[8 + i])]);
  ds.conditions = ds.condition_names.size();
  for (std::size_t i = 0; i < d; ++i) ds.feature_names.push_back(fmt::format("px{}", i));
  ds.validate();
  return ds;
}

// ---- normalization ---------------------------------------------------------

Normalized normalize_minmax(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("normalize_minmax expects a matrix");
  Normalized out{x, {}, {}};
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t c = 0; c < d; ++c) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, x(r, c));
      hi = std::max(hi, x(r, c));
    }
    if (n == 0) lo = hi = 0.0;
    out.range.emplace_back(lo, hi);
    if (!(hi > lo)) {
      out.constant_features.push_back(c);
      for (std::size_t r = 0; r < n; ++r) out.x(r, c) = 0.0;
      continue;
    }
    const double span = hi - lo;
    for (std::size_t r = 0; r < n; ++r) {
      out.x(r, c) = std::clamp((x(r, c) - lo) / span, 0.0, 1.0);
    }
  }
  return out;
}

Tensor inverse_minmax(const Tensor& x, const std::vector<std::pair<double, double>>& range) {
  if (x.rank() != 2 || x.cols() != range.size()) {
    throw ShapeError("inverse_minmax: feature count does not match the stored ranges");
  }
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const auto [lo, hi] = range[c];
      out(r, c) = lo + x(r, c) * (hi - lo);
    }
  }
  return out;
}

std::vector<std::size_t> normalize_dataset(Dataset& ds) {
  auto n = normalize_minmax(ds.x);
  ds.x = std::move(n.x);
  ds.feature_range = std::move(n.range);
  if (!n.constant_features.empty()) {
    spdlog::warn("{} constant feature(s) normalized to 0", n.constant_features.size());
  }
  return n.constant_features;
}

// ---- synthetic data --------------------------------------------------------

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.conditions == 0 || spec.per_condition == 0 || spec.dim == 0 || spec.factors == 0) {
    throw std::invalid_argument("synthetic spec counts must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Tensor means(Shape{spec.conditions, spec.dim});
  for (double& v : means.values()) v = spec.separation * normal(rng);
  Tensor w(Shape{spec.dim, spec.factors});
  for (double& v : w.values()) v = normal(rng) / std::sqrt(static_cast<double>(spec.factors));

  Dataset ds;
  const std::size_t n = spec.conditions * spec.per_condition;
  ds.x = Tensor(Shape{n, spec.dim});
  std::vector<double> z(spec.factors);
  for (std::size_t k = 0; k < spec.conditions; ++k) {
    for (std::size_t i = 0; i < spec.per_condition; ++i) {
      const std::size_t r = k * spec.per_condition + i;
      for (double& v : z) v = unit(rng);
      for (std::size_t c = 0; c < spec.dim; ++c) {
        double v = means(k, c) + spec.noise * normal(rng);
        for (std::size_t f = 0; f < spec.factors; ++f) v += w(c, f) * z[f];
        ds.x(r, c) = v;
      }
      ds.c.push_back(k);
    }
  }
  ds.conditions = spec.conditions;
  for (std::size_t k = 0; k < spec.conditions; ++k) ds.condition_names.push_back(fmt::format("c{}", k));
  for (std::size_t c = 0; c < spec.dim; ++c) ds.feature_names.push_back(fmt::format("x{}", c));
  normalize_dataset(ds);
  ds.validate();
  return ds;
}

// ---- model archive ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'A', 'E', '1'};

json layers_json(const std::vector<nn::DenseLayer>& layers) {
  json out = json::array();
  for (const auto& l : layers) {
    out.push_back({{"in", l.in_dim()},
                   {"out", l.out_dim()},
                   {"activation", std::string(nn::activation_name(l.activation))}});
  }
  return out;
}

const std::vector<nn::DenseLayer>* group_layers(const nn::FAEModel& m, nn::Group g) {
  switch (g) {
    case nn::Group::kEncoder: return &m.encoder;
    case nn::Group::kDecoder: return &m.decoder;
    case nn::Group::kAdversary: return &m.adversary;
    case nn::Group::kClassifier: return &m.classifier;
    case nn::Group::kDiscriminator: return &m.discriminator;
    case nn::Group::kEmbedding: return nullptr;
  }
  return nullptr;
}

void put_le64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_le64(std::string_view in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)]);
  }
  return v;
}

json arch_fields(const nn::Architecture& a) {
  return {{"input_dim", a.input_dim},
          {"fiber_dim", a.fiber_dim},
          {"base_dim", a.base_dim},
          {"conditions", a.conditions},
          {"encoder_hidden", a.encoder_hidden},
          {"decoder_hidden", a.decoder_hidden},
          {"adversary_hidden", a.adversary_hidden},
          {"classifier_hidden", a.classifier_hidden},
          {"discriminator_hidden", a.discriminator_hidden},
          {"omega0", a.omega0},
          {"decoder_skips", a.decoder_skips},
          {"decoder_output", std::string(nn::activation_name(a.decoder_output))}};
}

}  // namespace

json architecture_json(const nn::FAEModel& model) {
  json j = arch_fields(model.arch);
  j["condition_names"] = model.arch.condition_names;
  json groups = json::object();
  for (nn::Group g : nn::kAllGroups) {
    const std::string name(nn::group_name(g));
    if (const auto* layers = group_layers(model, g)) {
      groups[name] = layers_json(*layers);
    } else {
      groups[name] = {{"rows", model.embedding.rows()}, {"cols", model.embedding.cols()}};
    }
  }
  j["groups"] = groups;
  return j;
}

std::string serialize_model(const nn::FAEModel& model) {
  const std::string arch = architecture_json(model).dump();
  std::string out(kMagic, 4);
  out += static_cast<char>(kArchiveVersion);
  put_le64(out, arch.size());
  out += arch;
  for (nn::Group g : nn::kAllGroups) {
    for (const Tensor* t : model.tensors(g)) {
      for (double v : t->values()) put_le64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

nn::FAEModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < 13 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a model archive (missing FAE1 magic)");
  }
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kArchiveVersion) {
    throw FormatError(fmt::format("unsupported model archive version {} (supported: {})",
                                  version, kArchiveVersion));
  }
  const std::uint64_t len = get_le64(bytes, 5);
  if (len > bytes.size() - 13) throw FormatError("model archive: architecture block truncated");
  json j;
  try {
    j = json::parse(bytes.substr(13, len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model archive: bad architecture block: ") + e.what());
  }

  nn::FAEModel model;
  try {
    nn::Architecture a;
    a.input_dim = j.at("input_dim").get<std::size_t>();
    a.fiber_dim = j.at("fiber_dim").get<std::size_t>();
    a.base_dim = j.at("base_dim").get<std::size_t>();
    a.conditions = j.at("conditions").get<std::size_t>();
    a.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
    a.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
    a.adversary_hidden = j.at("adversary_hidden").get<std::vector<std::size_t>>();
    a.classifier_hidden = j.at("classifier_hidden").get<std::vector<std::size_t>>();
    a.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<std::size_t>>();
    a.omega0 = j.at("omega0").get<double>();
    a.decoder_skips = j.at("decoder_skips").get<bool>();
    a.decoder_output = nn::parse_activation(j.at("decoder_output").get<std::string>());
    a.condition_names = j.at("condition_names").get<std::vector<std::string>>();
    a.validate();
    // the structure is rebuilt from the architecture, then checked against
    // the recorded layer shapes
    model = nn::init_model(a, 0);
    if (architecture_json(model)["groups"] != j.at("groups")) {
      throw FormatError("model archive: layer shapes disagree with the architecture");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model archive: bad architecture block: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model archive: ") + e.what());
  }

  std::size_t count = 0;
  for (nn::Group g : nn::kAllGroups) count += model.parameter_count(g);
  const std::size_t offset = 13 + len;
  if (bytes.size() - offset != count * 8) {
    throw FormatError(fmt::format("model archive: payload has {} bytes, expected {}",
                                  bytes.size() - offset, count * 8));
  }
  std::size_t at = offset;
  for (nn::Group g : nn::kAllGroups) {
    for (Tensor* t : model.tensors(g)) {
      for (double& v : t->values()) {
        v = std::bit_cast<double>(get_le64(bytes, at));
        at += 8;
      }
    }
  }
  return model;
}

void save_model(const nn::FAEModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

nn::FAEModel load_model(const std::filesystem::path& path) {
  try {
    return deserialize_model(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- run configuration -----------------------------------------------------

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view section) {
  if (!j.is_object()) {
    throw std::invalid_argument(fmt::format("config: '{}' must be an object", section));
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument(fmt::format("config: unknown key '{}' in {}", key, section));
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  try {
    check_keys(j, {"data", "model", "train", "solver", "output_dir", "seed"}, "top level");
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "output_dir", cfg.output_dir);

    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, {"csv", "condition_column", "idx_images", "idx_labels", "synthetic"}, "data");
      if (d.contains("csv")) cfg.data.csv = d.at("csv").get<std::string>();
      read_opt(d, "condition_column", cfg.data.condition_column);
      if (d.contains("idx_images")) cfg.data.idx_images = d.at("idx_images").get<std::string>();
      if (d.contains("idx_labels")) cfg.data.idx_labels = d.at("idx_labels").get<std::string>();
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        check_keys(s, {"conditions", "per_condition", "dim", "seed", "factors", "separation",
                       "noise"},
                   "data.synthetic");
        SyntheticSpec spec;
        spec.seed = cfg.seed;
        read_opt(s, "conditions", spec.conditions);
        read_opt(s, "per_condition", spec.per_condition);
        read_opt(s, "dim", spec.dim);
        read_opt(s, "seed", spec.seed);
        read_opt(s, "factors", spec.factors);
        read_opt(s, "separation", spec.separation);
        read_opt(s, "noise", spec.noise);
        cfg.data.synthetic = spec;
      }
    }

    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, {"fiber_dim", "base_dim", "encoder_hidden", "decoder_hidden",
                     "adversary_hidden", "classifier_hidden", "discriminator_hidden",
                     "omega0", "decoder_skips", "decoder_output"},
                 "model");
      auto& a = cfg.arch;
      read_opt(m, "fiber_dim", a.fiber_dim);
      read_opt(m, "base_dim", a.base_dim);
      read_opt(m, "encoder_hidden", a.encoder_hidden);
      read_opt(m, "decoder_hidden", a.decoder_hidden);
      read_opt(m, "adversary_hidden", a.adversary_hidden);
      read_opt(m, "classifier_hidden", a.classifier_hidden);
      read_opt(m, "discriminator_hidden", a.discriminator_hidden);
      read_opt(m, "omega0", a.omega0);
      read_opt(m, "decoder_skips", a.decoder_skips);
      if (m.contains("decoder_output")) {
        a.decoder_output = nn::parse_activation(m.at("decoder_output").get<std::string>());
      }
    }

    cfg.train.seed = cfg.seed;
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, {"mu_mse", "mu_ac1", "mu_ac2", "mu_c1", "mu_c2", "mu_d1", "mu_d2",
                     "grl_lambda", "batch_size", "epochs", "seed", "adversarial", "fitting",
                     "gan", "non_saturating"},
                 "train");
      auto& c = cfg.train;
      read_opt(t, "mu_mse", c.mu_mse);
      read_opt(t, "mu_ac1", c.mu_ac1);
      read_opt(t, "mu_ac2", c.mu_ac2);
      read_opt(t, "mu_c1", c.mu_c1);
      read_opt(t, "mu_c2", c.mu_c2);
      read_opt(t, "mu_d1", c.mu_d1);
      read_opt(t, "mu_d2", c.mu_d2);
      read_opt(t, "grl_lambda", c.grl_lambda);
      read_opt(t, "batch_size", c.batch_size);
      read_opt(t, "epochs", c.epochs);
      read_opt(t, "seed", c.seed);
      read_opt(t, "adversarial", c.adversarial);
      read_opt(t, "fitting", c.fitting);
      read_opt(t, "gan", c.gan);
      read_opt(t, "non_saturating", c.non_saturating);
    }

    if (j.contains("solver")) {
      const json& s = j.at("solver");
      check_keys(s, {"depth", "dt", "lambda_reg", "learning_rate", "max_iterations",
                     "tolerance", "window", "optimizer", "rms_decay", "eps", "lr_decay",
                     "patience"},
                 "solver");
      auto& c = cfg.solver;
      read_opt(s, "depth", c.depth);
      read_opt(s, "dt", c.dt);
      read_opt(s, "lambda_reg", c.lambda_reg);
      read_opt(s, "learning_rate", c.learning_rate);
      read_opt(s, "max_iterations", c.max_iterations);
      read_opt(s, "tolerance", c.tolerance);
      read_opt(s, "window", c.window);
      if (s.contains("optimizer")) c.optimizer = geodesic::parse_optimizer(s.at("optimizer").get<std::string>());
      read_opt(s, "rms_decay", c.rms_decay);
      read_opt(s, "eps", c.eps);
      read_opt(s, "lr_decay", c.lr_decay);
      read_opt(s, "patience", c.patience);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  cfg.train.validate();
  cfg.solver.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json run_config_json(const RunConfig& cfg) {
  json data = json::object();
  if (cfg.data.csv) data["csv"] = *cfg.data.csv;
  data["condition_column"] = cfg.data.condition_column;
  if (cfg.data.idx_images) data["idx_images"] = *cfg.data.idx_images;
  if (cfg.data.idx_labels) data["idx_labels"] = *cfg.data.idx_labels;
  if (const auto& s = cfg.data.synthetic) {
    data["synthetic"] = {{"conditions", s->conditions}, {"per_condition", s->per_condition},
                         {"dim", s->dim},               {"seed", s->seed},
                         {"factors", s->factors},       {"separation", s->separation},
                         {"noise", s->noise}};
  }
  json model = arch_fields(cfg.arch);
  model.erase("input_dim");
  model.erase("conditions");
  const auto& t = cfg.train;
  const auto& s = cfg.solver;
  return {{"seed", cfg.seed},
          {"output_dir", cfg.output_dir},
          {"data", data},
          {"model", model},
          {"train",
           {{"mu_mse", t.mu_mse}, {"mu_ac1", t.mu_ac1}, {"mu_ac2", t.mu_ac2},
            {"mu_c1", t.mu_c1}, {"mu_c2", t.mu_c2}, {"mu_d1", t.mu_d1}, {"mu_d2", t.mu_d2},
            {"grl_lambda", t.grl_lambda}, {"batch_size", t.batch_size}, {"epochs", t.epochs},
            {"seed", t.seed}, {"adversarial", t.adversarial}, {"fitting", t.fitting},
            {"gan", t.gan}, {"non_saturating", t.non_saturating}}},
          {"solver",
           {{"depth", s.depth}, {"dt", s.dt}, {"lambda_reg", s.lambda_reg},
            {"learning_rate", s.learning_rate}, {"max_iterations", s.max_iterations},
            {"tolerance", s.tolerance}, {"window", s.window},
            {"optimizer", std::string(geodesic::optimizer_name(s.optimizer))},
            {"rms_decay", s.rms_decay}, {"eps", s.eps}, {"lr_decay", s.lr_decay},
            {"patience", s.patience}}}};
}

Dataset load_dataset(const DataSource& src) {
  const int sources = int(src.csv.has_value()) + int(src.idx_images || src.idx_labels) +
                      int(src.synthetic.has_value());
  if (sources != 1) {
    throw std::invalid_argument("config: exactly one of data.csv, data.idx_*, data.synthetic is required");
  }
  if (src.csv) {
    Dataset ds = load_csv(*src.csv, src.condition_column);
    normalize_dataset(ds);
    return ds;
  }
  if (src.synthetic) return make_synthetic(*src.synthetic);
  if (!src.idx_images || !src.idx_labels) {
    throw std::invalid_argument("config: data.idx_images and data.idx_labels go together");
  }
  return load_idx(*src.idx_images, *src.idx_labels);
}

}  // namespace fibrae::data_io

#include "fibrae/io_util.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>
#include <cmath>
#include <stdexcept>

#include "fibrae/dataset.hpp"

namespace fibrae {

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " to " +
                             path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) { return fmt::format("{}", v); }

void Dataset::validate(bool require_unit) const {
  if (x.rank() != 2 || x.rows() != c.size()) {
    throw std::invalid_argument("dataset: " + std::to_string(c.size()) +
                                " labels for feature matrix " +
                                shape_string(x.shape()));
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] >= conditions) {
      throw std::invalid_argument("dataset: condition id " +
                                  std::to_string(c[i]) + " >= K=" +
                                  std::to_string(conditions));
    }
  }
  if (!condition_names.empty() && condition_names.size() != conditions) {
    throw std::invalid_argument("dataset: condition name count != K");
  }
  for (double v : x.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature");
    if (require_unit && (v < 0.0 || v > 1.0)) {
      throw std::invalid_argument("dataset: feature value outside [0,1]");
    }
  }
}

}  // namespace fibrae

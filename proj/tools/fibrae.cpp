#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fibrae/data_io.hpp"
#include "fibrae/geodesic.hpp"
#include "fibrae/geometry.hpp"
#include "fibrae/io_util.hpp"
#include "fibrae/metrics.hpp"
#include "fibrae/nn.hpp"
#include "fibrae/oracle.hpp"
#include "fibrae/training.hpp"

namespace fs = std::filesystem;
using namespace fibrae;
using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kNumericalError = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("fibrae");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("FIBRAE_LOG")) {
    const std::string level = env;
    if (level == "error") {
      spdlog::set_level(spdlog::level::err);
    } else if (level == "debug") {
      spdlog::set_level(spdlog::level::debug);
    } else if (level != "info") {
      spdlog::warn("FIBRAE_LOG='{}' not one of error, info, debug; using info", level);
    }
  }
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

// A decoder with one base point per condition: either a trained FAE or a
// linear debug decoder described in JSON.
struct TransportModel {
  std::unique_ptr<nn::FAEModel> fae;
  std::unique_ptr<geometry::LatentDecoder> decoder;
  std::vector<std::vector<double>> embeddings;
  std::vector<std::string> names;

  std::size_t fiber_dim() const { return decoder->fiber_dim(); }

  std::size_t condition(const std::string& key) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == key) return i;
    }
    std::size_t id = 0;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
    if (ec == std::errc{} && ptr == key.data() + key.size() && id < embeddings.size()) return id;
    throw UsageError(fmt::format("unknown condition '{}' (model has {} conditions{}{})", key,
                                 embeddings.size(), names.empty() ? "" : ": ",
                                 fmt::join(names, ", ")));
  }
};

TransportModel load_transport_model(const fs::path& path) {
  const std::string bytes = read_file(path);
  TransportModel tm;
  if (bytes.rfind("FAE1", 0) == 0) {
    tm.fae = std::make_unique<nn::FAEModel>(data_io::deserialize_model(bytes));
    tm.decoder = std::make_unique<geometry::FAEDecoder>(*tm.fae);
    for (std::size_t k = 0; k < tm.fae->arch.conditions; ++k) {
      tm.embeddings.push_back(nn::embed(*tm.fae, k));
    }
    tm.names = tm.fae->arch.condition_names;
    return tm;
  }
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception&) {
    throw UsageError(path.string() + ": neither a model archive nor a JSON debug model");
  }
  try {
    const json& lin = j.at("linear_decoder");
    const auto rows = lin.at("matrix").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw UsageError("linear_decoder.matrix is empty");
    Tensor a(Shape{rows.size(), rows.front().size()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != a.cols()) throw UsageError("linear_decoder.matrix is ragged");
      for (std::size_t c = 0; c < a.cols(); ++c) a(r, c) = rows[r][c];
    }
    const auto m = lin.at("fiber_dim").get<std::size_t>();
    tm.decoder = std::make_unique<geometry::LinearDecoder>(a, m);
    tm.embeddings = lin.at("embeddings").get<std::vector<std::vector<double>>>();
    for (const auto& e : tm.embeddings) {
      if (e.size() != tm.decoder->base_dim()) {
        throw UsageError("linear_decoder.embeddings rows must have the base dimension");
      }
    }
    if (lin.contains("condition_names")) {
      tm.names = lin.at("condition_names").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": bad debug model: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(path.string() + ": bad debug model: " + e.what());
  }
  return tm;
}

std::vector<double> parse_point(const std::string& text, std::size_t dim) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    out.push_back(data_io::parse_number(std::string_view(text).substr(start, end - start), 1,
                                        "--point"));
    start = end + 1;
  }
  if (out.size() != dim) {
    throw UsageError(fmt::format("--point has {} coordinates, the fiber has {}", out.size(), dim));
  }
  return out;
}

// Fiber coordinates from a CSV with columns f_0..f_{m-1}, or the encoded
// samples of condition `from` in a dataset CSV.
std::vector<std::vector<double>> read_fibers(const fs::path& path, const TransportModel& tm,
                                             std::size_t from,
                                             const std::string& condition_column) {
  const auto table = data_io::read_csv(path);
  const std::size_t m = tm.fiber_dim();
  std::vector<std::vector<double>> out;
  if (std::find(table.header.begin(), table.header.end(), "f_0") != table.header.end()) {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < m; ++c) cols.push_back(table.column(fmt::format("f_{}", c)));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      std::vector<double> f;
      for (std::size_t c = 0; c < m; ++c) {
        f.push_back(data_io::parse_number(table.rows[r][cols[c]], r + 2, table.header[cols[c]]));
      }
      out.push_back(std::move(f));
    }
    return out;
  }
  if (!tm.fae) throw UsageError("dataset input needs a trained model (no f_0 column found)");
  const Dataset ds = data_io::load_csv(path, condition_column);
  if (ds.dim() != tm.fae->arch.input_dim) {
    throw UsageError(fmt::format("input has {} features, the model expects {}", ds.dim(),
                                 tm.fae->arch.input_dim));
  }
  const std::string& wanted = tm.names.empty() ? std::to_string(from) : tm.names[from];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.condition_names[ds.c[i]] != wanted) continue;
    out.push_back(nn::encode(*tm.fae, ds.x.row(i)));
  }
  return out;
}

void add_solver_flags(CLI::App& cmd, geodesic::SolverConfig& s, std::string& config) {
  cmd.add_option("--config", config, "Run configuration JSON (solver section is used)");
  cmd.add_option("--lambda-reg", s.lambda_reg, "Endpoint regularization weight");
  cmd.add_option("--depth", s.depth, "Faber-Schauder depth N");
  cmd.add_option("--dt", s.dt, "Riemann-sum step (negative power of two)");
  cmd.add_option("--learning-rate", s.learning_rate, "Solver step size");
  cmd.add_option("--max-iterations", s.max_iterations, "Solver iteration cap");
  cmd.add_option("--tolerance", s.tolerance, "Relative improvement threshold");
}

// Explicit flags win over the config file, which wins over defaults.
geodesic::SolverConfig resolve_solver(const CLI::App& cmd, const geodesic::SolverConfig& flags,
                                      const std::string& config) {
  geodesic::SolverConfig s;
  if (!config.empty()) s = data_io::load_run_config(config).solver;
  auto take = [&](const char* name, auto member) {
    if (cmd.count(name) > 0) s.*member = flags.*member;
  };
  take("--lambda-reg", &geodesic::SolverConfig::lambda_reg);
  take("--depth", &geodesic::SolverConfig::depth);
  take("--dt", &geodesic::SolverConfig::dt);
  take("--learning-rate", &geodesic::SolverConfig::learning_rate);
  take("--max-iterations", &geodesic::SolverConfig::max_iterations);
  take("--tolerance", &geodesic::SolverConfig::tolerance);
  s.validate();
  return s;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config, csv, condition_column, idx_images, idx_labels, out_dir;
  std::size_t epochs = 0, batch_size = 0, fiber_dim = 0, base_dim = 0;
  std::uint64_t seed = 0;
  double mu_mse = 0.0;
  bool no_adversarial = false, no_fitting = false, no_gan = false;
};

int cmd_train(const CLI::App& cmd, const TrainArgs& a) {
  data_io::RunConfig cfg;
  if (!a.config.empty()) cfg = data_io::load_run_config(a.config);
  if (cmd.count("--csv") > 0) {
    cfg.data = {};
    cfg.data.csv = a.csv;
  }
  if (cmd.count("--condition-column") > 0) cfg.data.condition_column = a.condition_column;
  if (cmd.count("--idx-images") > 0 || cmd.count("--idx-labels") > 0) {
    cfg.data = {};
    cfg.data.idx_images = a.idx_images;
    cfg.data.idx_labels = a.idx_labels;
  }
  if (cmd.count("--out-dir") > 0) cfg.output_dir = a.out_dir;
  if (cmd.count("--epochs") > 0) cfg.train.epochs = a.epochs;
  if (cmd.count("--batch-size") > 0) cfg.train.batch_size = a.batch_size;
  if (cmd.count("--mu-mse") > 0) cfg.train.mu_mse = a.mu_mse;
  if (cmd.count("--fiber-dim") > 0) cfg.arch.fiber_dim = a.fiber_dim;
  if (cmd.count("--base-dim") > 0) cfg.arch.base_dim = a.base_dim;
  if (cmd.count("--seed") > 0) {
    cfg.seed = cfg.train.seed = a.seed;
    if (cfg.data.synthetic) cfg.data.synthetic->seed = a.seed;
  }
  if (a.no_adversarial) cfg.train.adversarial = false;
  if (a.no_fitting) cfg.train.fitting = false;
  if (a.no_gan) cfg.train.gan = false;
  cfg.train.validate();

  for (const auto* p : {&cfg.data.csv, &cfg.data.idx_images, &cfg.data.idx_labels}) {
    if (*p && !fs::exists(**p)) throw UsageError("dataset file not found: " + **p);
  }
  const Dataset data = data_io::load_dataset(cfg.data);
  cfg.arch.input_dim = data.dim();
  cfg.arch.conditions = data.conditions;
  cfg.arch.condition_names = data.condition_names;
  cfg.arch.validate();
  spdlog::info("training on {} samples, D={}, K={}, m={}, n={}, {} epochs", data.size(),
               data.dim(), data.conditions, cfg.arch.fiber_dim, cfg.arch.base_dim,
               cfg.train.epochs);

  auto model = nn::init_model(cfg.arch, cfg.train.seed);
  const auto result = training::train(model, data, cfg.train);
  spdlog::info("reconstruction MSE {} -> {}", result.initial_mse, result.final_mse);

  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  data_io::save_model(model, out / "model.fae");
  training::write_loss_trace(out / "losses.csv", result.trace);
  write_file_atomic(out / "config.json", data_io::run_config_json(cfg).dump(2) + "\n");
  std::cout << (out / "model.fae").string() << "\n";
  return 0;
}

// ---- transport ---------------------------------------------------------------

struct TransportArgs {
  std::string model, from, to, input, out, config, condition_column = "condition";
  std::size_t jobs = 0;
  std::uint64_t seed = 0;
  geodesic::SolverConfig solver;
};

int cmd_transport(const CLI::App& cmd, const TransportArgs& a) {
  const auto tm = load_transport_model(a.model);
  const auto solver = resolve_solver(cmd, a.solver, a.config);
  const std::size_t from = tm.condition(a.from), to = tm.condition(a.to);
  const auto fibers = read_fibers(a.input, tm, from, a.condition_column);
  std::vector<geometry::LatentPoint> starts;
  for (const auto& f : fibers) starts.push_back({f, tm.embeddings[from]});
  spdlog::info("transporting {} points from condition {} to {}", starts.size(), from, to);
  const auto results =
      geodesic::correspondence_map(*tm.decoder, starts, tm.embeddings[to], solver, a.jobs);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.converged ? 0 : 1;
  if (failed > 0) spdlog::warn("{} of {} solves did not converge", failed, results.size());
  ensure_parent(a.out);
  write_file_atomic(a.out, geodesic::correspondence_csv(starts, results, tm.fiber_dim()));
  return 0;
}

// ---- trace / interpolate -----------------------------------------------------

struct TraceArgs {
  std::string model, from, to, point, out, frames_out, config;
  std::size_t frames = 0;
  std::uint64_t seed = 0;
  geodesic::SolverConfig solver;
};

std::string frames_csv(const std::vector<std::vector<double>>& frames) {
  std::string out = "t";
  const std::size_t d = frames.empty() ? 0 : frames.front().size();
  for (std::size_t c = 0; c < d; ++c) out += fmt::format(",x_{}", c);
  out += '\n';
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double t = frames.size() == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(frames.size() - 1);
    out += fmt::format("{}", t);
    for (double v : frames[i]) out += fmt::format(",{}", v);
    out += '\n';
  }
  return out;
}

geodesic::TransportResult solve_single(const CLI::App& cmd, const TraceArgs& a,
                                       const TransportModel& tm) {
  auto solver = resolve_solver(cmd, a.solver, a.config);
  solver.keep_trace = true;
  const std::size_t from = tm.condition(a.from), to = tm.condition(a.to);
  const geometry::LatentPoint start{parse_point(a.point, tm.fiber_dim()), tm.embeddings[from]};
  auto r = geodesic::solve_geodesic(*tm.decoder, start, tm.embeddings[to], solver);
  spdlog::info("energy {} (naive {}), residual {}, {} iterations{}", r.energy, r.initial_energy,
               r.residual, r.iterations, r.converged ? "" : ", not converged");
  return r;
}

int cmd_trace(const CLI::App& cmd, const TraceArgs& a) {
  const auto tm = load_transport_model(a.model);
  const auto r = solve_single(cmd, a, tm);
  ensure_parent(a.out);
  write_file_atomic(a.out, geodesic::path_trace_csv(r));
  if (!a.frames_out.empty()) {
    if (a.frames == 0) throw UsageError("--frames-out needs --frames > 0");
    ensure_parent(a.frames_out);
    write_file_atomic(a.frames_out, frames_csv(geodesic::interpolate(*tm.decoder, r, a.frames)));
  }
  return 0;
}

int cmd_interpolate(const CLI::App& cmd, const TraceArgs& a) {
  const auto tm = load_transport_model(a.model);
  const auto r = solve_single(cmd, a, tm);
  ensure_parent(a.out);
  write_file_atomic(a.out, frames_csv(geodesic::interpolate(*tm.decoder, r, a.frames)));
  return 0;
}

// ---- metrics -----------------------------------------------------------------

struct MetricsArgs {
  std::string points, out;
  std::vector<std::string> labels;
  double perplexity = 30.0;
  bool per_point = false;
  std::size_t jobs = 0;
};

int cmd_metrics(const MetricsArgs& a) {
  const auto table = data_io::read_csv(a.points);
  std::vector<std::size_t> label_cols;
  for (const auto& l : a.labels) label_cols.push_back(table.column(l));
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (std::find(label_cols.begin(), label_cols.end(), c) == label_cols.end()) {
      feature_cols.push_back(c);
    }
  }
  if (feature_cols.empty()) throw UsageError("no coordinate columns in " + a.points);
  if (table.rows.empty()) throw UsageError("no rows in " + a.points);
  Tensor pts(Shape{table.rows.size(), feature_cols.size()});
  std::map<std::string, std::vector<std::size_t>> groupings;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    std::map<std::string, std::size_t> ids;
    auto& lab = groupings[a.labels[i]];
    for (const auto& row : table.rows) {
      lab.push_back(ids.try_emplace(row[label_cols[i]], ids.size()).first->second);
    }
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < feature_cols.size(); ++c) {
      pts(r, c) = data_io::parse_number(table.rows[r][feature_cols[c]], r + 2,
                                        table.header[feature_cols[c]]);
    }
  }
  const auto report = metrics::metrics_report(pts, groupings, a.perplexity, a.per_point, a.jobs);
  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    ensure_parent(a.out);
    write_file_atomic(a.out, text);
  }
  return 0;
}

// ---- oracle-check ------------------------------------------------------------

int cmd_oracle_check(const std::string& suite, std::uint64_t seed) {
  std::vector<oracle::SuiteCheck> checks;
  try {
    checks = oracle::run_oracle_suite(suite, seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " | " << c.detail << "\n";
    ok = ok && c.passed;
  }
  std::cout << fmt::format("{} suite: {}\n", suite, ok ? "passed" : "FAILED");
  return ok ? 0 : kNumericalError;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Fiber-bundle autoencoder training and geodesic transport"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fibrae 1.0");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model; writes model.fae, losses.csv, config.json");
  train->add_option("--config", train_args.config, "Run configuration JSON");
  train->add_option("--csv", train_args.csv, "Dataset CSV (header row)");
  train->add_option("--condition-column", train_args.condition_column, "Condition column of the CSV");
  train->add_option("--idx-images", train_args.idx_images, "IDX image file");
  train->add_option("--idx-labels", train_args.idx_labels, "IDX label file");
  train->add_option("--out-dir", train_args.out_dir, "Output directory");
  train->add_option("--epochs", train_args.epochs, "Epoch count");
  train->add_option("--batch-size", train_args.batch_size, "Batch size");
  train->add_option("--mu-mse", train_args.mu_mse, "Reconstruction learning rate");
  train->add_option("--fiber-dim", train_args.fiber_dim, "Fiber dimension m");
  train->add_option("--base-dim", train_args.base_dim, "Base dimension n");
  train->add_option("--seed", train_args.seed, "Seed for initialization, shuffling and synthetic data");
  train->add_flag("--no-adversarial", train_args.no_adversarial, "Disable condition adversarial updates");
  train->add_flag("--no-fitting", train_args.no_fitting, "Disable condition fitting updates");
  train->add_flag("--no-gan", train_args.no_gan, "Disable GAN updates");

  TransportArgs tr_args;
  auto* transport = app.add_subcommand("transport", "Geodesic transport of fiber points between conditions");
  transport->add_option("--model", tr_args.model, "Model archive or linear debug model JSON")->required();
  transport->add_option("--from-condition", tr_args.from, "Source condition (name or id)")->required();
  transport->add_option("--to-condition", tr_args.to, "Target condition (name or id)")->required();
  transport->add_option("--input", tr_args.input, "CSV of fiber coordinates f_0.. or a dataset CSV")->required();
  transport->add_option("--condition-column", tr_args.condition_column, "Condition column for dataset input");
  transport->add_option("--out", tr_args.out, "Correspondence CSV")->required();
  transport->add_option("--jobs", tr_args.jobs, "Parallel solves (0 = all cores)");
  transport->add_option("--seed", tr_args.seed, "Accepted for uniformity; transport is deterministic");
  add_solver_flags(*transport, tr_args.solver, tr_args.config);

  TraceArgs trace_args;
  auto* trace = app.add_subcommand("trace", "Solve one geodesic and export its path");
  trace->add_option("--model", trace_args.model, "Model archive or linear debug model JSON")->required();
  trace->add_option("--from", trace_args.from, "Source condition")->required();
  trace->add_option("--to", trace_args.to, "Target condition")->required();
  trace->add_option("--point", trace_args.point, "Fiber coordinates, comma separated")->required();
  trace->add_option("--out", trace_args.out, "Path CSV")->required();
  trace->add_option("--frames", trace_args.frames, "Decoded frames to export");
  trace->add_option("--frames-out", trace_args.frames_out, "Decoded frame CSV");
  trace->add_option("--seed", trace_args.seed, "Accepted for uniformity; the solver is deterministic");
  add_solver_flags(*trace, trace_args.solver, trace_args.config);

  TraceArgs interp_args;
  interp_args.frames = 10;
  auto* interp = app.add_subcommand("interpolate", "Decode equally spaced frames along a geodesic");
  interp->add_option("--model", interp_args.model, "Model archive or linear debug model JSON")->required();
  interp->add_option("--from", interp_args.from, "Source condition")->required();
  interp->add_option("--to", interp_args.to, "Target condition")->required();
  interp->add_option("--point", interp_args.point, "Fiber coordinates, comma separated")->required();
  interp->add_option("--frames", interp_args.frames, "Frame count")->check(CLI::PositiveNumber);
  interp->add_option("--out", interp_args.out, "Frame CSV")->required();
  interp->add_option("--seed", interp_args.seed, "Accepted for uniformity; the solver is deterministic");
  add_solver_flags(*interp, interp_args.solver, interp_args.config);

  MetricsArgs met_args;
  auto* met = app.add_subcommand("metrics", "LISI and Ward decomposition of a labelled point cloud");
  met->add_option("--points", met_args.points, "CSV of coordinates plus label columns")->required();
  met->add_option("--labels", met_args.labels, "Label column (repeatable)")->required();
  met->add_option("--perplexity", met_args.perplexity, "LISI perplexity")->capture_default_str();
  met->add_flag("--per-point", met_args.per_point, "Include per-point LISI scores");
  met->add_option("--out", met_args.out, "JSON report (stdout when absent)");
  met->add_option("--jobs", met_args.jobs, "Worker threads (0 = all cores)");

  std::string suite;
  std::uint64_t oracle_seed = 0;
  auto* orc = app.add_subcommand("oracle-check", "Compare the solver with analytic oracles");
  orc->add_option("--suite", suite, "linear, sphere or grid")->required();
  orc->add_option("--seed", oracle_seed, "Seed for random linear decoders");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsageError;
  }

  try {
    if (*train) return cmd_train(*train, train_args);
    if (*transport) return cmd_transport(*transport, tr_args);
    if (*trace) return cmd_trace(*trace, trace_args);
    if (*interp) return cmd_interpolate(*interp, interp_args);
    if (*met) return cmd_metrics(met_args);
    if (*orc) return cmd_oracle_check(suite, oracle_seed);
  } catch (const training::NumericalError& e) {
    spdlog::error("{}", e.what());
    return kNumericalError;
  } catch (const NonFiniteError& e) {
    spdlog::error("{}", e.what());
    return kNumericalError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kUsageError;
  }
  return kUsageError;
}

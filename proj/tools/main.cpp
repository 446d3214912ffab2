// Command-line pipeline: demonstration data -> network training -> reference
// set -> bit-allocation selection -> Monte-Carlo evaluation and budget sweeps.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "bitalloc/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bitalloc;

namespace {

struct RunConfig {
  std::string scenario = "pendulum_main";
  fs::path out_dir = "runs/pendulum_main";
  // Empty paths resolve against out_dir.
  fs::path train_data, test_data, model_path, reference_path;

  int train_sequences = 600;
  int test_sequences = 200;
  int seq_len = 200;
  TrainConfig train;
  int reference_samples = 40000;

  FeasibleSpec feasible;
  KldSearchParams kld;
  EvalConfig eval;

  std::vector<int> sweep_r_sums;
  std::vector<Criterion> sweep_methods;

  std::uint64_t seed_data = 101, seed_train = 202, seed_reference = 1833,
                seed_eval = 404, seed_drift = 505;
  int threads = 0;

  json raw;  // canonical dump for hashing
};

void apply_scenario_defaults(RunConfig& cfg) {
  if (cfg.scenario == "pendulum_main") {
    cfg.feasible.lo = 3;
    cfg.feasible.hi = 9;
    cfg.feasible.reserved = {{0, 10}, {1, 10}};
    cfg.feasible.reserved_in_budget = true;
    cfg.sweep_r_sums = {42, 43, 44, 45, 46, 47, 48};
    cfg.sweep_methods = {Criterion::kld_hist, Criterion::kld_knn, Criterion::mse,
                         Criterion::equal};
  } else if (cfg.scenario == "pendulum_ml_extension") {
    cfg.feasible.lo = 1;
    cfg.feasible.hi = 7;
    cfg.feasible.reserved = {{2, 10}, {3, 10}, {4, 10}, {5, 10}};
    cfg.feasible.reserved_in_budget = false;
    cfg.out_dir = "runs/pendulum_ml_extension";
    cfg.sweep_r_sums = {3, 4, 5, 6, 7};
    cfg.sweep_methods = {Criterion::kld_hist, Criterion::mse, Criterion::equal};
  } else {
    throw CLI::ValidationError("scenario", "unknown scenario: " + cfg.scenario);
  }
}

RunConfig load_config(const std::string& config_path) {
  RunConfig cfg;
  json j = json::object();
  if (!config_path.empty()) j = json::parse(io::read_file(config_path));

  cfg.scenario = j.value("scenario", cfg.scenario);
  apply_scenario_defaults(cfg);

  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("paths")) {
    const json& p = j["paths"];
    if (p.contains("train_data")) cfg.train_data = p["train_data"].get<std::string>();
    if (p.contains("test_data")) cfg.test_data = p["test_data"].get<std::string>();
    if (p.contains("model")) cfg.model_path = p["model"].get<std::string>();
    if (p.contains("reference")) cfg.reference_path = p["reference"].get<std::string>();
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    cfg.train_sequences = d.value("train_sequences", cfg.train_sequences);
    cfg.test_sequences = d.value("test_sequences", cfg.test_sequences);
    cfg.seq_len = d.value("seq_len", cfg.seq_len);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.patience_epochs = t.value("patience_epochs", cfg.train.patience_epochs);
    cfg.train.validation_ratio = t.value("validation_ratio", cfg.train.validation_ratio);
    cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
    cfg.train.hidden_units = t.value("hidden_units", cfg.train.hidden_units);
  }
  cfg.reference_samples = j.value("reference_samples", cfg.reference_samples);
  if (j.contains("feasible")) cfg.feasible = feasible_spec_from_json(j["feasible"]);
  if (j.contains("estimator")) {
    const json& e = j["estimator"];
    const std::string kind = e.value("kind", "hist");
    cfg.kld.estimator = kind == "knn" ? EstimatorKind::knn : EstimatorKind::histogram;
    cfg.kld.knn.k = e.value("k", cfg.kld.knn.k);
    cfg.kld.knn.standardize = e.value("standardize", cfg.kld.knn.standardize);
    cfg.kld.y_bins = e.value("y_bins", cfg.kld.y_bins);
  }
  if (j.contains("mc")) {
    const json& m = j["mc"];
    cfg.eval.iterations = m.value("iterations", cfg.eval.iterations);
    cfg.eval.dt = m.value("dt", cfg.eval.dt);
    cfg.eval.criterion.horizon_s = m.value("horizon_s", cfg.eval.criterion.horizon_s);
    cfg.eval.z = m.value("z", cfg.eval.z);
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    if (s.contains("r_sums")) cfg.sweep_r_sums = s["r_sums"].get<std::vector<int>>();
    if (s.contains("methods")) {
      cfg.sweep_methods.clear();
      for (const auto& name : s["methods"])
        cfg.sweep_methods.push_back(criterion_from_name(name.get<std::string>()));
    }
  }
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    cfg.seed_data = s.value("data", cfg.seed_data);
    cfg.seed_train = s.value("train", cfg.seed_train);
    cfg.seed_reference = s.value("reference", cfg.seed_reference);
    cfg.seed_eval = s.value("eval", cfg.seed_eval);
    cfg.seed_drift = s.value("drift", cfg.seed_drift);
  }
  cfg.threads = j.value("threads", cfg.threads);
  cfg.raw = j;
  return cfg;
}

void finalize_paths(RunConfig& cfg) {
  if (cfg.train_data.empty()) cfg.train_data = cfg.out_dir / "train.bin";
  if (cfg.test_data.empty()) cfg.test_data = cfg.out_dir / "test.bin";
  if (cfg.model_path.empty()) cfg.model_path = cfg.out_dir / "model.json";
  if (cfg.reference_path.empty()) cfg.reference_path = cfg.out_dir / "reference.bin";
  cfg.train.seed = cfg.seed_train;
  cfg.eval.threads = cfg.threads;
  cfg.kld.threads = cfg.threads;
  cfg.kld.knn.threads = 1;  // candidates parallelize, not inner queries
}

std::string config_hash(const RunConfig& cfg) {
  json j = cfg.raw;
  j["scenario"] = cfg.scenario;  // hash sees the resolved scenario
  return io::hash_hex(j.dump());
}

json seeds_json(const RunConfig& cfg) {
  return json{{"data", cfg.seed_data},
              {"train", cfg.seed_train},
              {"reference", cfg.seed_reference},
              {"eval", cfg.seed_eval},
              {"drift", cfg.seed_drift}};
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const json& extra, const fs::path& path) {
  json m;
  m["command"] = command;
  m["scenario"] = cfg.scenario;
  m["config_hash"] = config_hash(cfg);
  m["seeds"] = seeds_json(cfg);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  io::write_file_atomic(path, m.dump(2) + "\n");
}

std::string file_fingerprint(const fs::path& path) {
  return io::hash_hex(io::read_file(path));
}

// Model plus the reference set, building and caching the latter on demand.
struct Artifacts {
  MlpModel model;
  Dataset reference;
  std::vector<FeatureRange> ranges;
};

Artifacts load_artifacts(const RunConfig& cfg) {
  Artifacts art;
  if (!fs::exists(cfg.model_path))
    throw std::runtime_error("model not found: " + cfg.model_path.string() +
                             " (run `train` first)");
  art.model = load_model(cfg.model_path);
  if (fs::exists(cfg.reference_path)) {
    art.reference = load_dataset(cfg.reference_path);
  } else {
    std::fprintf(stderr, "building reference set (%d samples)...\n",
                 cfg.reference_samples);
    art.reference = collect_reference_dataset(art.model, cfg.reference_samples,
                                              cfg.seed_reference, cfg.eval);
    fs::create_directories(cfg.out_dir);
    save_dataset(art.reference, cfg.reference_path);
    write_manifest(cfg, "reference",
                   {{"samples", static_cast<std::int64_t>(art.reference.rows())}},
                   cfg.reference_path.string() + ".manifest.json");
  }
  art.ranges = fit_feature_ranges(
      RowMatrixXd(art.reference.samples.leftCols(cfg.feasible.n_features)));
  return art;
}

json report_json(const EvaluationReport& report, const FeasibleSpec& spec) {
  json j;
  j["bits"] = spec.full_bits(report.allocation);
  j["iterations"] = report.iterations;
  j["errors"] = report.errors;
  j["diverged"] = report.diverged;
  j["p_e"] = report.p_e;
  j["ci_lo"] = report.ci_lo;
  j["ci_hi"] = report.ci_hi;
  j["seed"] = report.seed;
  return j;
}

int cmd_gen_data(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const DemoData data = generate_lqr_dataset(cfg.train_sequences, cfg.test_sequences,
                                             cfg.seq_len, cfg.seed_data);
  save_demo_dataset(data.train, cfg.train_data);
  save_demo_dataset(data.test, cfg.test_data);
  write_manifest(cfg, "gen-data",
                 {{"train_rows", static_cast<std::int64_t>(data.train.inputs.rows())},
                  {"test_rows", static_cast<std::int64_t>(data.test.inputs.rows())},
                  {"lqr_redraws", data.lqr_redraws},
                  {"train_fingerprint", file_fingerprint(cfg.train_data)},
                  {"test_fingerprint", file_fingerprint(cfg.test_data)}},
                 cfg.out_dir / "gen_data_manifest.json");
  std::printf("wrote %s (%lld rows) and %s (%lld rows)\n", cfg.train_data.c_str(),
              static_cast<long long>(data.train.inputs.rows()), cfg.test_data.c_str(),
              static_cast<long long>(data.test.inputs.rows()));
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  if (!fs::exists(cfg.train_data))
    throw std::runtime_error("dataset not found: " + cfg.train_data.string());
  const DemoDataset train_set = load_demo_dataset(cfg.train_data);
  const TrainResult result = train_mlp(train_set, cfg.train);

  double test_mse = std::numeric_limits<double>::quiet_NaN();
  if (fs::exists(cfg.test_data)) {
    const DemoDataset test_set = load_demo_dataset(cfg.test_data);
    test_mse = mean_squared_error(result.model, test_set.inputs, test_set.targets);
  }

  fs::create_directories(cfg.out_dir);
  save_model(result.model, cfg.model_path, config_hash(cfg));

  io::CsvTable log;
  log.header = {"epoch", "train_mse", "val_mse"};
  for (const EpochLog& e : result.log)
    log.rows.push_back({std::to_string(e.epoch), io::format_double(e.train_mse),
                        io::format_double(e.val_mse)});
  io::write_file_atomic(cfg.out_dir / "train_log.csv", io::to_csv(log));

  json extra{{"best_epoch", result.best_epoch},
             {"best_val_mse", result.best_val_mse},
             {"stopped_epoch", result.stopped_epoch},
             {"model_fingerprint", file_fingerprint(cfg.model_path)}};
  if (std::isfinite(test_mse)) extra["test_mse"] = test_mse;
  write_manifest(cfg, "train", extra, cfg.out_dir / "train_manifest.json");
  std::printf("trained to epoch %d (best %d, val mse %.6g, test mse %.6g)\n",
              result.stopped_epoch, result.best_epoch, result.best_val_mse, test_mse);
  return 0;
}

ScoreTable select_allocation(const RunConfig& cfg, const Artifacts& art, int r_sum,
                             Criterion method) {
  const int n_searched = static_cast<int>(cfg.feasible.searched_features().size());
  if (method == Criterion::equal) {
    RateAllocation a = equal_share(cfg.feasible.searched_sum(r_sum), n_searched, 0);
    a.reserved_bits = cfg.feasible.reserved_in_budget ? cfg.feasible.reserved_total() : 0;
    ScoreTable table;
    table.entries = {{a, 0.0, Criterion::equal}};
    return table;
  }
  const auto feasible = cfg.feasible.feasible_set(r_sum);
  if (feasible.empty())
    throw std::runtime_error("empty feasible set at budget " + std::to_string(r_sum));
  if (method == Criterion::mse)
    return mse_allocation(art.reference.samples.leftCols(cfg.feasible.n_features),
                          art.ranges, cfg.feasible, feasible);
  KldSearchParams params = cfg.kld;
  params.estimator =
      method == Criterion::kld_hist ? EstimatorKind::histogram : EstimatorKind::knn;
  return kld_allocation(art.reference, art.model, art.ranges, cfg.feasible, feasible,
                        params);
}

int cmd_allocate(const RunConfig& cfg, int r_sum, const std::string& method_name) {
  const Criterion method = criterion_from_name(method_name);
  const Artifacts art = load_artifacts(cfg);
  const ScoreTable table = select_allocation(cfg, art, r_sum, method);
  const AllocationScore& best = table.best();

  fs::create_directories(cfg.out_dir / "scores");
  const fs::path table_path =
      cfg.out_dir / "scores" /
      ("score_" + std::to_string(r_sum) + "_" + criterion_name(method) + ".csv");
  save_score_table_csv(table, table_path);

  json out;
  out["r_sum"] = r_sum;
  out["method"] = criterion_name(method);
  out["bits"] = best.allocation.bits;
  out["full_bits"] = cfg.feasible.full_bits(best.allocation);
  out["score"] = best.score;
  out["candidates"] = table.entries.size();
  out["score_table"] = table_path.string();
  write_manifest(cfg, "allocate", out,
                 cfg.out_dir / ("allocate_" + std::to_string(r_sum) + "_" +
                                criterion_name(method) + ".json"));
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, int r_sum, const std::string& method_name,
                 const std::string& bits_csv) {
  const Artifacts art = load_artifacts(cfg);
  RateAllocation allocation;
  if (!bits_csv.empty()) {
    for (std::size_t pos = 0; pos < bits_csv.size();) {
      std::size_t comma = bits_csv.find(',', pos);
      if (comma == std::string::npos) comma = bits_csv.size();
      allocation.bits.push_back(std::stoi(bits_csv.substr(pos, comma - pos)));
      pos = comma + 1;
    }
    allocation.reserved_bits =
        cfg.feasible.reserved_in_budget ? cfg.feasible.reserved_total() : 0;
  } else {
    allocation = select_allocation(cfg, art, r_sum, criterion_from_name(method_name))
                     .best()
                     .allocation;
  }
  const QuantizerBank bank = bank_for_allocation(art.ranges, cfg.feasible, allocation);
  const EvaluationReport report =
      evaluate_allocation(allocation, bank, art.model, cfg.eval, cfg.seed_eval);

  fs::create_directories(cfg.out_dir);
  json out = report_json(report, cfg.feasible);
  write_manifest(cfg, "evaluate", out, cfg.out_dir / "evaluate_report.json");
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

std::vector<std::string> sweep_row(const SweepCell& cell, const FeasibleSpec& spec) {
  io::CsvTable tmp = sweep_report_table({cell}, spec);
  return tmp.rows.front();
}

int cmd_sweep(const RunConfig& cfg, bool fresh) {
  const Artifacts art = load_artifacts(cfg);
  fs::create_directories(cfg.out_dir / "scores");
  const fs::path csv_path = cfg.out_dir / "sweep.csv";
  const fs::path manifest_path = cfg.out_dir / "sweep_manifest.json";

  // Completed cells from an interrupted run are reused when the config hash
  // still matches; --fresh discards them.
  std::map<std::pair<int, std::string>, std::vector<std::string>> done;
  if (!fresh && fs::exists(manifest_path) && fs::exists(csv_path)) {
    const json m = json::parse(io::read_file(manifest_path));
    if (m.value("config_hash", "") == config_hash(cfg)) {
      const io::CsvTable old = io::parse_csv(io::read_file(csv_path));
      for (const auto& row : old.rows) {
        if (row.size() < 2 || row.back().rfind("error:", 0) == 0) continue;
        done[{std::stoi(row[0]), row[1]}] = row;
      }
      if (!done.empty())
        std::fprintf(stderr, "resuming sweep: %zu cells already done\n", done.size());
    }
  }

  SweepConfig sweep_cfg;
  sweep_cfg.r_sums = cfg.sweep_r_sums;
  sweep_cfg.methods = cfg.sweep_methods;
  sweep_cfg.feasible = cfg.feasible;
  sweep_cfg.kld = cfg.kld;
  sweep_cfg.eval = cfg.eval;
  sweep_cfg.eval_seed = cfg.seed_eval;

  json cells_meta = json::array();
  for (const auto& [key, row] : done)
    cells_meta.push_back({{"r_sum", key.first}, {"method", key.second}, {"status", "ok"}});

  auto rewrite_outputs = [&]() {
    io::CsvTable csv;
    csv.header = sweep_report_table({}, cfg.feasible).header;
    for (int r_sum : cfg.sweep_r_sums)
      for (Criterion method : cfg.sweep_methods) {
        auto it = done.find({r_sum, criterion_name(method)});
        if (it != done.end()) csv.rows.push_back(it->second);
      }
    io::write_file_atomic(csv_path, io::to_csv(csv));
    write_manifest(cfg, "sweep",
                   {{"cells", cells_meta},
                    {"model_fingerprint", file_fingerprint(cfg.model_path)},
                    {"report", csv_path.string()}},
                   manifest_path);
  };

  const auto on_cell = [&](const SweepCell& cell) {
    const std::string detail =
        cell.error.empty() ? "p_e=" + io::format_double(cell.report.p_e) +
                                 " bits=" + to_string(cell.allocation)
                           : cell.error;
    std::fprintf(stderr, "cell r_sum=%d method=%s %s\n", cell.r_sum,
                 criterion_name(cell.method), detail.c_str());
    if (cell.error.empty() && !cell.scores.entries.empty()) {
      save_score_table_csv(cell.scores,
                           cfg.out_dir / "scores" /
                               ("score_" + std::to_string(cell.r_sum) + "_" +
                                criterion_name(cell.method) + ".csv"));
    }
    done[{cell.r_sum, criterion_name(cell.method)}] = sweep_row(cell, cfg.feasible);
    cells_meta.push_back({{"r_sum", cell.r_sum},
                          {"method", criterion_name(cell.method)},
                          {"status", cell.error.empty() ? "ok" : cell.error}});
    rewrite_outputs();
  };

  const auto skip = [&](int r_sum, Criterion method) {
    return done.count({r_sum, criterion_name(method)}) > 0;
  };

  sweep(art.reference, art.model, art.ranges, sweep_cfg, on_cell, skip);
  rewrite_outputs();
  std::printf("sweep report: %s\n", csv_path.c_str());
  return 0;
}

int cmd_drift_check(const RunConfig& cfg, const std::string& method_name) {
  const Criterion method = criterion_from_name(method_name);
  const Artifacts art = load_artifacts(cfg);

  std::vector<std::pair<int, RateAllocation>> allocations;
  for (int r_sum : cfg.sweep_r_sums)
    allocations.emplace_back(
        r_sum, select_allocation(cfg, art, r_sum, method).best().allocation);

  const auto rows =
      distribution_drift_check(art.reference, art.model, allocations, art.ranges,
                               cfg.feasible, cfg.kld.estimator, cfg.eval, cfg.seed_drift);

  io::CsvTable csv;
  csv.header = {"r_sum", "method", "bits", "kld_inputs", "seed"};
  for (const DriftRow& row : rows)
    csv.rows.push_back({std::to_string(row.r_sum), criterion_name(method),
                        to_string(row.allocation), io::format_double(row.kld),
                        std::to_string(row.seed)});
  fs::create_directories(cfg.out_dir);
  const fs::path path = cfg.out_dir / "drift.csv";
  io::write_file_atomic(path, io::to_csv(csv));
  write_manifest(cfg, "drift-check", {{"report", path.string()}},
                 cfg.out_dir / "drift_manifest.json");
  std::printf("drift report: %s\n", path.c_str());
  return 0;
}

int cmd_export_plot(const RunConfig& cfg, const std::string& sweep_csv) {
  const fs::path in = sweep_csv.empty() ? cfg.out_dir / "sweep.csv" : fs::path(sweep_csv);
  const io::CsvTable table = io::parse_csv(io::read_file(in));

  std::set<int> r_sums;
  std::set<std::string> methods;
  std::map<std::pair<int, std::string>, std::vector<std::string>> cells;
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size() || row.back() != "ok") continue;
    const int r_sum = std::stoi(row[0]);
    r_sums.insert(r_sum);
    methods.insert(row[1]);
    cells[{r_sum, row[1]}] = row;
  }
  const std::size_t pe_col = table.header.size() - 4;  // p_e, ci_lo, ci_hi, status

  io::CsvTable out;
  out.header = {"r_sum"};
  for (const std::string& m : methods)
    for (const char* suffix : {"_p_e", "_ci_lo", "_ci_hi"})
      out.header.push_back(m + suffix);
  for (int r_sum : r_sums) {
    std::vector<std::string> row{std::to_string(r_sum)};
    for (const std::string& m : methods) {
      auto it = cells.find({r_sum, m});
      for (std::size_t off = 0; off < 3; ++off)
        row.push_back(it == cells.end() ? "" : it->second[pe_col + off]);
    }
    out.rows.push_back(std::move(row));
  }
  fs::create_directories(cfg.out_dir);
  const fs::path path = cfg.out_dir / "plot.csv";
  io::write_file_atomic(path, io::to_csv(out));
  std::printf("plot data: %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-aware bit allocation for a quantized-input neural controller"};
  app.require_subcommand(1);

  std::string config_path;
  std::string scenario_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> iterations_flag, threads_flag;
  std::string estimator_flag, out_flag;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--scenario", scenario_flag, "pendulum_main | pendulum_ml_extension");
  app.add_option("--seed", seed_flag, "base seed overriding all stage seeds");
  app.add_option("--iterations", iterations_flag, "Monte-Carlo iterations");
  app.add_option("--estimator", estimator_flag, "hist | knn");
  app.add_option("--threads", threads_flag, "worker cap (0 = hardware)");
  app.add_option("--out", out_flag, "output directory");

  auto* gen = app.add_subcommand("gen-data", "generate controller demonstrations");
  auto* train = app.add_subcommand("train", "train the network on demonstrations");
  auto* alloc = app.add_subcommand("allocate", "select a bit allocation");
  auto* eval = app.add_subcommand("evaluate", "Monte-Carlo evaluate an allocation");
  auto* sweep_cmd = app.add_subcommand("sweep", "budget sweep across methods");
  auto* drift = app.add_subcommand("drift-check", "input-distribution drift table");
  auto* plot = app.add_subcommand("export-plot", "pivot a sweep report for plotting");

  int r_sum = 0;
  std::string method = "kld_hist";
  std::string bits_csv;
  bool fresh = false;
  std::string sweep_csv_in;
  alloc->add_option("--r-sum", r_sum, "total bit budget")->required();
  alloc->add_option("--method", method, "kld_hist | kld_knn | mse | equal");
  eval->add_option("--r-sum", r_sum, "total bit budget");
  eval->add_option("--method", method, "selection method when --bits is absent");
  eval->add_option("--bits", bits_csv, "searched-feature bits, comma separated");
  sweep_cmd->add_flag("--fresh", fresh, "ignore an existing resumable manifest");
  drift->add_option("--method", method, "allocation rule per budget");
  plot->add_option("--sweep-csv", sweep_csv_in, "sweep report to pivot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage problems exit 1; --help and friends keep their zero code.
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (!scenario_flag.empty()) {
      cfg.scenario = scenario_flag;
      apply_scenario_defaults(cfg);
      cfg.raw["scenario"] = scenario_flag;
    }
    if (seed_flag) {
      cfg.seed_data = *seed_flag;
      cfg.seed_train = *seed_flag + 1;
      cfg.seed_reference = *seed_flag + 2;
      cfg.seed_eval = *seed_flag + 3;
      cfg.seed_drift = *seed_flag + 4;
      cfg.raw["seeds"] = seeds_json(cfg);
    }
    if (iterations_flag) {
      cfg.eval.iterations = *iterations_flag;
      cfg.raw["mc"]["iterations"] = *iterations_flag;
    }
    if (!estimator_flag.empty()) {
      if (estimator_flag != "hist" && estimator_flag != "knn")
        throw CLI::ValidationError("--estimator", "expected hist or knn");
      cfg.kld.estimator =
          estimator_flag == "knn" ? EstimatorKind::knn : EstimatorKind::histogram;
      cfg.raw["estimator"]["kind"] = estimator_flag;
    }
    if (threads_flag) cfg.threads = *threads_flag;
    if (!out_flag.empty()) {
      cfg.out_dir = out_flag;
      cfg.raw["out_dir"] = out_flag;
    }
    finalize_paths(cfg);

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (alloc->parsed()) return cmd_allocate(cfg, r_sum, method);
    if (eval->parsed()) {
      if (bits_csv.empty() && r_sum == 0)
        throw CLI::ValidationError("evaluate", "need --bits or --r-sum");
      return cmd_evaluate(cfg, r_sum, method, bits_csv);
    }
    if (sweep_cmd->parsed()) return cmd_sweep(cfg, fresh);
    if (drift->parsed()) return cmd_drift_check(cfg, method);
    if (plot->parsed()) return cmd_export_plot(cfg, sweep_csv_in);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

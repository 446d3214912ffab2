#include "bitalloc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bitalloc/parallel.hpp"

namespace bitalloc {

bool steady_state_error(const Trajectory& traj, const SuccessCriterion& crit) {
  if (traj.duration() + 1e-9 < crit.horizon_s)
    throw std::invalid_argument("trajectory shorter than horizon");
  // Samples with t >= horizon - window; 11 samples for 0.1 s at dt = 0.01.
  const auto first = static_cast<std::size_t>(
      std::ceil((crit.horizon_s - crit.window_s) / traj.dt - 1e-9));
  const auto last = static_cast<std::size_t>(
      std::llround(crit.horizon_s / traj.dt));
  for (std::size_t i = first; i <= last && i < traj.states.size(); ++i) {
    const PlantState& s = traj.states[i];
    if (std::abs(s.r - crit.reference) > crit.position_band) return true;
    if (std::abs(s.theta) > crit.angle_band) return true;
  }
  return false;
}

WaldInterval wald_ci(int errors, int n, double z) {
  if (n < 1 || errors < 0 || errors > n) throw std::invalid_argument("bad counts");
  const double p = static_cast<double>(errors) / static_cast<double>(n);
  const double half = z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

namespace {

PlantParams episode_params(const EvalConfig& cfg, const Scenario& sc) {
  PlantParams p;
  p.cart_mass = cfg.cart_mass;
  p.friction = cfg.friction;
  p.gravity = cfg.gravity;
  p.pendulum_mass = sc.pendulum_mass;
  p.length_to_com = sc.length_to_com;
  return p;
}

// Controller view of an episode: mass/length quantized once, states per step.
struct QuantizedViewController {
  const QuantizerBank* bank;  // 6 specs in feature order
  const MlpModel* model;
  double mass_hat = 0.0;
  double length_hat = 0.0;

  double operator()(const PlantState& s) const {
    Eigen::Matrix<double, 6, 1> x;
    x << mass_hat, length_hat, quantize(bank->specs[2], s.r),
        quantize(bank->specs[3], s.theta), quantize(bank->specs[4], s.v),
        quantize(bank->specs[5], s.q);
    return forward(*model, x);
  }
};

}  // namespace

EvaluationReport evaluate_allocation(const RateAllocation& allocation,
                                     const QuantizerBank& bank, const MlpModel& model,
                                     const EvalConfig& cfg, std::uint64_t seed) {
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (bank.features() != 6) throw std::invalid_argument("bank must cover 6 features");

  std::vector<char> failed(static_cast<std::size_t>(cfg.iterations), 0);
  std::vector<char> blew_up(static_cast<std::size_t>(cfg.iterations), 0);

  parallel_for(cfg.iterations, cfg.threads, [&](std::int64_t i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
    const Scenario sc = draw_scenario(rng, cfg.ranges);
    const PlantParams params = episode_params(cfg, sc);

    QuantizedViewController controller;
    controller.bank = &bank;
    controller.model = &model;
    controller.mass_hat = quantize(bank.specs[0], sc.pendulum_mass);
    controller.length_hat = quantize(bank.specs[1], sc.length_to_com);

    try {
      const Trajectory traj =
          rollout(params, controller, PlantState{0.0, sc.theta0, 0.0, 0.0},
                  cfg.criterion.horizon_s, cfg.dt);
      failed[static_cast<std::size_t>(i)] =
          steady_state_error(traj, cfg.criterion) ? 1 : 0;
    } catch (const std::runtime_error&) {
      // A diverged loop is a control failure.
      failed[static_cast<std::size_t>(i)] = 1;
      blew_up[static_cast<std::size_t>(i)] = 1;
    }
  });

  EvaluationReport report;
  report.allocation = allocation;
  report.iterations = cfg.iterations;
  report.seed = seed;
  for (std::size_t i = 0; i < failed.size(); ++i) {
    report.errors += failed[i];
    report.diverged += blew_up[i];
  }
  report.p_e = static_cast<double>(report.errors) / static_cast<double>(cfg.iterations);
  const WaldInterval ci = wald_ci(report.errors, cfg.iterations, cfg.z);
  report.ci_lo = ci.lo;
  report.ci_hi = ci.hi;
  return report;
}

namespace {

// Pools closed-loop rows until n_samples are collected; the row layout is
// [m, l, r, theta, v, q] plus the applied force when with_output is set.
Dataset collect_loop_samples(const std::function<double(const PlantState&, const Scenario&)>& force_fn,
                             bool with_output, int n_samples, std::uint64_t seed,
                             const EvalConfig& cfg) {
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  const auto steps = static_cast<std::int64_t>(
      std::llround(cfg.criterion.horizon_s / cfg.dt));
  const std::int64_t episodes_needed = (n_samples + steps - 1) / steps;
  const std::int64_t episode_budget = 2 * episodes_needed + 8;

  Dataset out;
  out.labels = kFeatureLabels;
  if (with_output) out.labels.push_back("f");
  out.samples.resize(n_samples, with_output ? 7 : 6);

  Eigen::Index row = 0;
  std::int64_t episode = 0;
  for (; episode < episode_budget && row < n_samples; ++episode) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(episode));
    const Scenario sc = draw_scenario(rng, cfg.ranges);
    const PlantParams params = episode_params(cfg, sc);
    const auto [A, B] = linearized_matrices(params);

    PlantState s{0.0, sc.theta0, 0.0, 0.0};
    for (std::int64_t t = 0; t < steps && row < n_samples; ++t) {
      double f = 0.0;
      try {
        f = force_fn(s, sc);
      } catch (const std::exception&) {
        break;  // rows collected before a failure are kept
      }
      out.samples(row, 0) = sc.pendulum_mass;
      out.samples(row, 1) = sc.length_to_com;
      out.samples(row, 2) = s.r;
      out.samples(row, 3) = s.theta;
      out.samples(row, 4) = s.v;
      out.samples(row, 5) = s.q;
      if (with_output) out.samples(row, 6) = f;
      ++row;
      s = PlantState::from(rk4_step(A, B, s.vec(), f, cfg.dt));
      if (!s.finite()) break;
    }
  }
  if (row < n_samples) throw std::runtime_error("insufficient rollouts for dataset");
  return out;
}

}  // namespace

Dataset collect_reference_dataset(const MlpModel& model, int n_samples,
                                  std::uint64_t seed, const EvalConfig& cfg) {
  return collect_loop_samples(
      [&](const PlantState& s, const Scenario& sc) {
        Eigen::Matrix<double, 6, 1> x;
        x << sc.pendulum_mass, sc.length_to_com, s.r, s.theta, s.v, s.q;
        return forward(model, x);
      },
      /*with_output=*/true, n_samples, seed, cfg);
}

Dataset collect_quantized_loop_inputs(const QuantizerBank& bank, const MlpModel& model,
                                      int n_samples, std::uint64_t seed,
                                      const EvalConfig& cfg) {
  if (bank.features() != 6) throw std::invalid_argument("bank must cover 6 features");
  return collect_loop_samples(
      [&](const PlantState& s, const Scenario& sc) {
        Eigen::Matrix<double, 6, 1> x;
        x << quantize(bank.specs[0], sc.pendulum_mass),
            quantize(bank.specs[1], sc.length_to_com), quantize(bank.specs[2], s.r),
            quantize(bank.specs[3], s.theta), quantize(bank.specs[4], s.v),
            quantize(bank.specs[5], s.q);
        return forward(model, x);
      },
      /*with_output=*/false, n_samples, seed, cfg);
}

std::vector<DriftRow> distribution_drift_check(
    const Dataset& reference, const MlpModel& model,
    const std::vector<std::pair<int, RateAllocation>>& allocations,
    const std::vector<FeatureRange>& ranges, const FeasibleSpec& spec,
    EstimatorKind estimator, const EvalConfig& cfg, std::uint64_t seed) {
  Dataset ref_inputs;
  ref_inputs.samples = reference.samples.leftCols(6);
  ref_inputs.labels = kFeatureLabels;

  HistogramConfig config;
  for (int i = 0; i < 6; ++i) {
    HistogramAxis axis;
    axis.bins = 8;
    axis.lo = ranges[static_cast<std::size_t>(i)].min;
    axis.hi = ranges[static_cast<std::size_t>(i)].max;
    config.axes.push_back(axis);
  }

  std::vector<DriftRow> rows;
  for (const auto& [r_sum, allocation] : allocations) {
    const QuantizerBank bank = bank_for_allocation(ranges, spec, allocation);
    const Dataset loop_inputs = collect_quantized_loop_inputs(
        bank, model, static_cast<int>(ref_inputs.rows()), seed, cfg);
    double value = 0.0;
    if (estimator == EstimatorKind::histogram) {
      value = kld_histogram_smoothed(ref_inputs, loop_inputs, config).value;
    } else {
      KnnParams knn;
      knn.k = std::max(1, static_cast<int>(std::lround(
                              std::sqrt(static_cast<double>(ref_inputs.rows())))));
      knn.threads = cfg.threads;
      value = kld_knn(ref_inputs, loop_inputs, knn).value;
    }
    rows.push_back({r_sum, allocation, value, seed});
  }
  return rows;
}

std::vector<SweepCell> sweep(const Dataset& reference, const MlpModel& model,
                             const std::vector<FeatureRange>& ranges,
                             const SweepConfig& config,
                             const std::function<void(const SweepCell&)>& on_cell,
                             const std::function<bool(int, Criterion)>& skip) {
  std::vector<SweepCell> cells;
  for (int r_sum : config.r_sums) {
    for (Criterion method : config.methods) {
      if (skip && skip(r_sum, method)) continue;
      SweepCell cell;
      cell.r_sum = r_sum;
      cell.method = method;
      try {
        const int n_searched = static_cast<int>(config.feasible.searched_features().size());
        if (method == Criterion::equal) {
          cell.allocation = equal_share(config.feasible.searched_sum(r_sum), n_searched, 0);
          cell.allocation.reserved_bits =
              config.feasible.reserved_in_budget ? config.feasible.reserved_total() : 0;
          cell.selection_score = 0.0;
          cell.scores.entries = {{cell.allocation, 0.0, Criterion::equal}};
        } else {
          const std::vector<RateAllocation> feasible = config.feasible.feasible_set(r_sum);
          if (feasible.empty())
            throw std::runtime_error("empty feasible set at budget " + std::to_string(r_sum));
          if (method == Criterion::mse) {
            cell.scores =
                mse_allocation(reference.samples.leftCols(config.feasible.n_features),
                               ranges, config.feasible, feasible);
          } else {
            KldSearchParams params = config.kld;
            params.estimator = method == Criterion::kld_hist ? EstimatorKind::histogram
                                                             : EstimatorKind::knn;
            cell.scores = kld_allocation(reference, model, ranges, config.feasible,
                                         feasible, params);
          }
          const AllocationScore& best = cell.scores.best();
          cell.allocation = best.allocation;
          cell.selection_score = best.score;
        }
        const QuantizerBank bank = bank_for_allocation(ranges, config.feasible, cell.allocation);
        cell.report = evaluate_allocation(cell.allocation, bank, model, config.eval,
                                          config.eval_seed);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (on_cell) on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

io::CsvTable sweep_report_table(const std::vector<SweepCell>& cells,
                                const FeasibleSpec& spec) {
  io::CsvTable csv;
  csv.header = {"r_sum", "method"};
  for (int i = 0; i < spec.n_features; ++i)
    csv.header.push_back("R" + std::to_string(i + 1));
  csv.header.insert(csv.header.end(),
                    {"errors", "iterations", "p_e", "ci_lo", "ci_hi", "status"});
  for (const SweepCell& cell : cells) {
    std::vector<std::string> row;
    row.push_back(std::to_string(cell.r_sum));
    row.push_back(criterion_name(cell.method));
    if (cell.error.empty()) {
      for (int b : spec.full_bits(cell.allocation)) row.push_back(std::to_string(b));
      row.push_back(std::to_string(cell.report.errors));
      row.push_back(std::to_string(cell.report.iterations));
      row.push_back(io::format_double(cell.report.p_e));
      row.push_back(io::format_double(cell.report.ci_lo));
      row.push_back(io::format_double(cell.report.ci_hi));
      row.push_back("ok");
    } else {
      for (int i = 0; i < spec.n_features; ++i) row.push_back("");
      row.insert(row.end(), {"", "", "", "", ""});
      row.push_back("error:" + cell.error);
    }
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

}  // namespace bitalloc

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bitalloc/allocator.hpp"
#include "bitalloc/dataset.hpp"
#include "bitalloc/divergence.hpp"
#include "bitalloc/io.hpp"
#include "bitalloc/mlu.hpp"
#include "bitalloc/plant.hpp"
#include "bitalloc/quantizer.hpp"

namespace bitalloc {

// Step-response success bands: the episode fails if any sample in the final
// window leaves the position or angle band.
struct SuccessCriterion {
  double position_band = 0.1;  // m around the reference
  double angle_band = 0.01;    // rad around upright
  double window_s = 0.1;
  double horizon_s = 2.0;
  double reference = kReferencePosition;
};

// True iff the trajectory commits a steady-state error under the criterion.
bool steady_state_error(const Trajectory& traj, const SuccessCriterion& crit);

struct WaldInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// p_hat +- z sqrt(p_hat (1 - p_hat) / n), clipped to [0, 1]. Degenerate at
// zero observed errors (interval collapses to a point).
WaldInterval wald_ci(int errors, int n, double z);

struct EvalConfig {
  SuccessCriterion criterion;
  int iterations = 2000;
  double dt = kControlDt;
  double z = 1.96;
  int threads = 0;  // 0 = hardware
  double cart_mass = 0.5;
  double friction = 0.1;
  double gravity = 9.8;
  ScenarioRanges ranges;
};

struct EvaluationReport {
  RateAllocation allocation;
  int iterations = 0;
  int errors = 0;
  int diverged = 0;  // counted in errors
  double p_e = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::uint64_t seed = 0;
};

// Monte-Carlo closed loop with the controller fed quantized inputs: mass and
// length quantized once per episode, state features every control step.
EvaluationReport evaluate_allocation(const RateAllocation& allocation,
                                     const QuantizerBank& bank, const MlpModel& model,
                                     const EvalConfig& cfg, std::uint64_t seed);

// Joint input-output samples from closed-loop episodes with unquantized
// inputs; rows [m, l, r, theta, v, q, f].
Dataset collect_reference_dataset(const MlpModel& model, int n_samples,
                                  std::uint64_t seed, const EvalConfig& cfg);

// Input-marginal samples from episodes run under a quantizer bank (true
// states, not their quantized copies).
Dataset collect_quantized_loop_inputs(const QuantizerBank& bank, const MlpModel& model,
                                      int n_samples, std::uint64_t seed,
                                      const EvalConfig& cfg);

struct DriftRow {
  int r_sum = 0;
  RateAllocation allocation;
  double kld = 0.0;
  std::uint64_t seed = 0;
};

// How far the closed-loop input distribution drifts from the reference one
// when the loop runs quantized; diagnostic for reusing one reference set
// across candidate allocations.
std::vector<DriftRow> distribution_drift_check(
    const Dataset& reference, const MlpModel& model,
    const std::vector<std::pair<int, RateAllocation>>& allocations,
    const std::vector<FeatureRange>& ranges, const FeasibleSpec& spec,
    EstimatorKind estimator, const EvalConfig& cfg, std::uint64_t seed);

struct SweepCell {
  int r_sum = 0;
  Criterion method = Criterion::equal;
  RateAllocation allocation;
  double selection_score = 0.0;
  ScoreTable scores;  // full candidate table behind the selection
  EvaluationReport report;
  std::string error;  // non-empty marks a failed cell
};

struct SweepConfig {
  std::vector<int> r_sums;
  std::vector<Criterion> methods;
  FeasibleSpec feasible;
  KldSearchParams kld;
  EvalConfig eval;
  std::uint64_t eval_seed = 0;
};

// Select-then-evaluate over the grid of budgets and methods. A failing cell
// is reported in its `error` field; remaining cells still run. on_cell fires
// after each cell for incremental persistence.
std::vector<SweepCell> sweep(const Dataset& reference, const MlpModel& model,
                             const std::vector<FeatureRange>& ranges,
                             const SweepConfig& config,
                             const std::function<void(const SweepCell&)>& on_cell = {},
                             const std::function<bool(int, Criterion)>& skip = {});

io::CsvTable sweep_report_table(const std::vector<SweepCell>& cells,
                                const FeasibleSpec& spec);

}  // namespace bitalloc

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bitalloc/dataset.hpp"
#include "bitalloc/divergence.hpp"
#include "bitalloc/mlu.hpp"
#include "bitalloc/quantizer.hpp"

namespace bitalloc {

// Integer bit depths for the searched features, in feature order.
// reserved_bits counts bits pre-committed to non-searched features when the
// budget convention includes them.
struct RateAllocation {
  std::vector<int> bits;
  int reserved_bits = 0;

  int total() const;
  bool operator==(const RateAllocation& other) const {
    return bits == other.bits && reserved_bits == other.reserved_bits;
  }
};

std::string to_string(const RateAllocation& a);

struct ChannelBudget {
  double bandwidth_hz = 0.0;       // B
  double snr_linear = 0.0;         // gamma
  double symbol_interval_s = 0.0;  // Ts
};

// floor(B * log2(1 + gamma) * Ts) bits per symbol interval.
int r_sum_from_budget(const ChannelBudget& budget);

// All integer vectors with lo <= bits_i <= hi summing to sum_bits, in
// lexicographic order; empty when infeasible.
std::vector<RateAllocation> enumerate_feasible(int n, int sum_bits, int lo, int hi);

// Every searched feature gets floor((r_sum - reserved_bits) / n).
RateAllocation equal_share(int r_sum, int n, int reserved_bits);

enum class Criterion { kld_hist, kld_knn, mse, equal };

const char* criterion_name(Criterion c);
Criterion criterion_from_name(const std::string& name);

struct AllocationScore {
  RateAllocation allocation;
  double score = 0.0;
  Criterion criterion = Criterion::equal;
};

// Scored feasible set; selection is the minimum score with lexicographically
// smallest allocation breaking ties.
struct ScoreTable {
  std::vector<AllocationScore> entries;

  const AllocationScore& best() const;
};

void save_score_table_csv(const ScoreTable& table, const std::filesystem::path& path);

struct ReservedFeature {
  int feature = 0;
  int bits = 10;
};

// Which features are searched vs pinned, the per-feature depth bounds, and
// whether the budget counts the pinned bits.
struct FeasibleSpec {
  int lo = 3;
  int hi = 9;
  std::vector<ReservedFeature> reserved;
  bool reserved_in_budget = true;
  int n_features = 6;

  std::vector<int> searched_features() const;
  int reserved_total() const;
  int searched_sum(int r_sum) const;
  std::vector<RateAllocation> feasible_set(int r_sum) const;
  // Per-feature bit vector combining reserved depths and searched bits.
  std::vector<int> full_bits(const RateAllocation& allocation) const;
};

nlohmann::json feasible_spec_to_json(const FeasibleSpec& spec);
FeasibleSpec feasible_spec_from_json(const nlohmann::json& j);

// Quantizer bank for one allocation, ranges fixed once from the reference
// set's feature columns.
QuantizerBank bank_for_allocation(const std::vector<FeatureRange>& ranges,
                                  const FeasibleSpec& spec,
                                  const RateAllocation& allocation);

// Sum of per-feature quantization MSE over the searched features; the
// reserved features contribute the same constant to every candidate.
ScoreTable mse_allocation(const RowMatrixXd& reference_inputs,
                          const std::vector<FeatureRange>& ranges,
                          const FeasibleSpec& spec,
                          const std::vector<RateAllocation>& feasible);

// Quantized counterpart of a reference set: inputs pushed through the bank,
// outputs recomputed by the model; row order preserved.
Dataset build_quantized_dataset(const Dataset& reference, const QuantizerBank& bank,
                                const MlpModel& model);

struct KldSearchParams {
  EstimatorKind estimator = EstimatorKind::histogram;
  KnnParams knn;
  // Eight output bins keep occupied joint cells populated enough that scores
  // compare mass ratios instead of counting starved singleton bins; finer
  // grids mis-rank the low-budget candidates.
  int y_bins = 8;
  int input_bins = 0;  // 0: coarsest searched grid, capped at 8
  int threads = 0;     // candidate-level parallelism; 0 = hardware
};

// Joint-histogram axes: inputs at the coarsest searched grid (2^lo bins,
// capped at 8) unless overridden, output over its reference range with
// y_bins bins. min_width carries the finest admissible step per input
// dimension; wider-than-required input bins are always admissible.
HistogramConfig joint_histogram_config(const Dataset& reference,
                                       const std::vector<FeatureRange>& ranges,
                                       const FeasibleSpec& spec, int y_bins = 8,
                                       int input_bins = 0);

// Scores every candidate by estimated divergence between the reference set
// and its quantized counterpart.
ScoreTable kld_allocation(const Dataset& reference, const MlpModel& model,
                          const std::vector<FeatureRange>& ranges,
                          const FeasibleSpec& spec,
                          const std::vector<RateAllocation>& feasible,
                          const KldSearchParams& params);

}  // namespace bitalloc

#include "bitalloc/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bitalloc/io.hpp"
#include "bitalloc/parallel.hpp"

namespace bitalloc {

int RateAllocation::total() const {
  return reserved_bits + std::accumulate(bits.begin(), bits.end(), 0);
}

std::string to_string(const RateAllocation& a) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    if (i) out << ',';
    out << a.bits[i];
  }
  out << ']';
  return out.str();
}

int r_sum_from_budget(const ChannelBudget& budget) {
  if (budget.bandwidth_hz <= 0.0 || budget.snr_linear <= 0.0 ||
      budget.symbol_interval_s <= 0.0)
    throw std::invalid_argument("channel budget quantities must be positive");
  const double capacity = budget.bandwidth_hz * std::log2(1.0 + budget.snr_linear);
  return static_cast<int>(std::floor(capacity * budget.symbol_interval_s));
}

std::vector<RateAllocation> enumerate_feasible(int n, int sum_bits, int lo, int hi) {
  if (n < 1) throw std::invalid_argument("need at least one feature");
  if (lo > hi) throw std::invalid_argument("lo exceeds hi");
  std::vector<RateAllocation> out;
  std::vector<int> current(static_cast<std::size_t>(n));
  // Depth-first in increasing digit order produces lexicographic results.
  auto recurse = [&](auto&& self, int pos, int remaining) -> void {
    const int slots_after = n - pos - 1;
    if (pos == n - 1) {
      if (remaining >= lo && remaining <= hi) {
        current.back() = remaining;
        out.push_back({current, 0});
      }
      return;
    }
    const int min_here = std::max(lo, remaining - slots_after * hi);
    const int max_here = std::min(hi, remaining - slots_after * lo);
    for (int b = min_here; b <= max_here; ++b) {
      current[static_cast<std::size_t>(pos)] = b;
      self(self, pos + 1, remaining - b);
    }
  };
  recurse(recurse, 0, sum_bits);
  return out;
}

RateAllocation equal_share(int r_sum, int n, int reserved_bits) {
  if (n < 1) throw std::invalid_argument("need at least one feature");
  if (r_sum <= reserved_bits)
    throw std::invalid_argument("budget does not exceed reserved bits");
  const int each = (r_sum - reserved_bits) / n;
  if (each < 1) throw std::invalid_argument("equal share allocates zero bits");
  RateAllocation a;
  a.bits.assign(static_cast<std::size_t>(n), each);
  a.reserved_bits = reserved_bits;
  return a;
}

const char* criterion_name(Criterion c) {
  switch (c) {
    case Criterion::kld_hist: return "kld_hist";
    case Criterion::kld_knn: return "kld_knn";
    case Criterion::mse: return "mse";
    case Criterion::equal: return "equal";
  }
  return "unknown";
}

Criterion criterion_from_name(const std::string& name) {
  if (name == "kld_hist") return Criterion::kld_hist;
  if (name == "kld_knn") return Criterion::kld_knn;
  if (name == "mse") return Criterion::mse;
  if (name == "equal") return Criterion::equal;
  throw std::invalid_argument("unknown method: " + name);
}

const AllocationScore& ScoreTable::best() const {
  if (entries.empty()) throw std::runtime_error("empty score table");
  const AllocationScore* best = &entries.front();
  for (const AllocationScore& e : entries) {
    if (e.score < best->score ||
        (e.score == best->score && e.allocation.bits < best->allocation.bits))
      best = &e;
  }
  return *best;
}

void save_score_table_csv(const ScoreTable& table, const std::filesystem::path& path) {
  if (table.entries.empty()) throw std::runtime_error("empty score table");
  const std::size_t n = table.entries.front().allocation.bits.size();

  std::vector<std::size_t> order(table.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = table.entries[a];
    const auto& eb = table.entries[b];
    if (ea.score != eb.score) return ea.score < eb.score;
    return ea.allocation.bits < eb.allocation.bits;
  });
  std::vector<int> rank(table.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i) + 1;

  io::CsvTable csv;
  for (std::size_t i = 0; i < n; ++i) csv.header.push_back("R" + std::to_string(i + 1));
  csv.header.insert(csv.header.end(), {"criterion", "score", "rank"});
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const AllocationScore& e = table.entries[i];
    std::vector<std::string> row;
    for (int b : e.allocation.bits) row.push_back(std::to_string(b));
    row.push_back(criterion_name(e.criterion));
    row.push_back(io::format_double(e.score));
    row.push_back(std::to_string(rank[i]));
    csv.rows.push_back(std::move(row));
  }
  io::write_file_atomic(path, io::to_csv(csv));
}

std::vector<int> FeasibleSpec::searched_features() const {
  std::vector<bool> is_reserved(static_cast<std::size_t>(n_features), false);
  for (const ReservedFeature& r : reserved) {
    if (r.feature < 0 || r.feature >= n_features)
      throw std::invalid_argument("reserved feature index out of range");
    is_reserved[static_cast<std::size_t>(r.feature)] = true;
  }
  std::vector<int> out;
  for (int i = 0; i < n_features; ++i)
    if (!is_reserved[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

int FeasibleSpec::reserved_total() const {
  int total = 0;
  for (const ReservedFeature& r : reserved) total += r.bits;
  return total;
}

int FeasibleSpec::searched_sum(int r_sum) const {
  return r_sum - (reserved_in_budget ? reserved_total() : 0);
}

std::vector<RateAllocation> FeasibleSpec::feasible_set(int r_sum) const {
  const int n = static_cast<int>(searched_features().size());
  auto set = enumerate_feasible(n, searched_sum(r_sum), lo, hi);
  const int reserved_bits = reserved_in_budget ? reserved_total() : 0;
  for (RateAllocation& a : set) a.reserved_bits = reserved_bits;
  return set;
}

std::vector<int> FeasibleSpec::full_bits(const RateAllocation& allocation) const {
  const std::vector<int> searched = searched_features();
  if (allocation.bits.size() != searched.size())
    throw std::invalid_argument("allocation does not match searched features");
  std::vector<int> bits(static_cast<std::size_t>(n_features), 0);
  for (const ReservedFeature& r : reserved) bits[static_cast<std::size_t>(r.feature)] = r.bits;
  for (std::size_t i = 0; i < searched.size(); ++i)
    bits[static_cast<std::size_t>(searched[i])] = allocation.bits[i];
  return bits;
}

nlohmann::json feasible_spec_to_json(const FeasibleSpec& spec) {
  nlohmann::json j;
  j["lo"] = spec.lo;
  j["hi"] = spec.hi;
  j["reserved_in_budget"] = spec.reserved_in_budget;
  j["n_features"] = spec.n_features;
  j["reserved"] = nlohmann::json::array();
  for (const ReservedFeature& r : spec.reserved)
    j["reserved"].push_back({{"feature", r.feature}, {"bits", r.bits}});
  return j;
}

FeasibleSpec feasible_spec_from_json(const nlohmann::json& j) {
  FeasibleSpec spec;
  spec.lo = j.value("lo", spec.lo);
  spec.hi = j.value("hi", spec.hi);
  spec.reserved_in_budget = j.value("reserved_in_budget", spec.reserved_in_budget);
  spec.n_features = j.value("n_features", spec.n_features);
  if (j.contains("reserved")) {
    spec.reserved.clear();
    for (const auto& item : j["reserved"])
      spec.reserved.push_back(
          {item.at("feature").get<int>(), item.at("bits").get<int>()});
  }
  return spec;
}

QuantizerBank bank_for_allocation(const std::vector<FeatureRange>& ranges,
                                  const FeasibleSpec& spec,
                                  const RateAllocation& allocation) {
  if (static_cast<int>(ranges.size()) != spec.n_features)
    throw std::invalid_argument("range count does not match feature count");
  return make_bank(ranges, spec.full_bits(allocation));
}

ScoreTable mse_allocation(const RowMatrixXd& reference_inputs,
                          const std::vector<FeatureRange>& ranges,
                          const FeasibleSpec& spec,
                          const std::vector<RateAllocation>& feasible) {
  if (feasible.empty()) throw std::invalid_argument("empty feasible set");
  const std::vector<int> searched = spec.searched_features();
  if (reference_inputs.cols() < spec.n_features)
    throw std::invalid_argument("reference inputs missing feature columns");

  ScoreTable table;
  table.entries.reserve(feasible.size());
  for (const RateAllocation& allocation : feasible) {
    double score = 0.0;
    for (std::size_t i = 0; i < searched.size(); ++i) {
      const int feature = searched[i];
      const QuantizerSpec q = make_quantizer(
          feature, ranges[static_cast<std::size_t>(feature)].min,
          ranges[static_cast<std::size_t>(feature)].max, allocation.bits[i]);
      score += quantization_mse(q, reference_inputs.col(feature));
    }
    table.entries.push_back({allocation, score, Criterion::mse});
  }
  return table;
}

Dataset build_quantized_dataset(const Dataset& reference, const QuantizerBank& bank,
                                const MlpModel& model) {
  const Eigen::Index n_features = bank.features();
  if (reference.dim() != n_features + model.out_dim())
    throw std::invalid_argument("dimension mismatch");
  if (model.in_dim() != n_features)
    throw std::invalid_argument("model input does not match bank");

  Dataset out;
  out.labels = reference.labels;
  out.samples.resize(reference.rows(), reference.dim());
  out.samples.leftCols(n_features) = reference.samples.leftCols(n_features);
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    quantize_row_inplace(bank, out.samples.row(r));
  out.samples.rightCols(model.out_dim()) =
      forward_batch(model, out.samples.leftCols(n_features));
  return out;
}

HistogramConfig joint_histogram_config(const Dataset& reference,
                                       const std::vector<FeatureRange>& ranges,
                                       const FeasibleSpec& spec, int y_bins,
                                       int input_bins) {
  if (reference.dim() <= spec.n_features)
    throw std::invalid_argument("reference set lacks output columns");
  HistogramConfig config;
  config.axes.reserve(static_cast<std::size_t>(reference.dim()));

  // Default: the coarsest grid any searched feature can receive; reserved
  // features are at least this deep in both scenarios.
  if (input_bins <= 0) input_bins = std::min(1 << spec.lo, 8);

  std::vector<int> max_bits(static_cast<std::size_t>(spec.n_features), spec.hi);
  for (const ReservedFeature& r : spec.reserved)
    max_bits[static_cast<std::size_t>(r.feature)] = r.bits;

  for (int i = 0; i < spec.n_features; ++i) {
    HistogramAxis axis;
    axis.bins = input_bins;
    axis.lo = ranges[static_cast<std::size_t>(i)].min;
    axis.hi = ranges[static_cast<std::size_t>(i)].max;
    axis.min_width = (axis.hi - axis.lo) /
                     std::ldexp(1.0, max_bits[static_cast<std::size_t>(i)]);
    config.axes.push_back(axis);
  }
  for (Eigen::Index c = spec.n_features; c < reference.dim(); ++c) {
    HistogramAxis axis;
    axis.bins = y_bins;
    axis.lo = reference.samples.col(c).minCoeff();
    axis.hi = reference.samples.col(c).maxCoeff();
    if (!(axis.hi > axis.lo)) axis.hi = axis.lo + 1.0;  // constant output column
    axis.min_width = 0.0;
    config.axes.push_back(axis);
  }
  return config;
}

ScoreTable kld_allocation(const Dataset& reference, const MlpModel& model,
                          const std::vector<FeatureRange>& ranges,
                          const FeasibleSpec& spec,
                          const std::vector<RateAllocation>& feasible,
                          const KldSearchParams& params) {
  if (feasible.empty()) throw std::invalid_argument("empty feasible set");

  const HistogramConfig hist_config =
      params.estimator == EstimatorKind::histogram
          ? joint_histogram_config(reference, ranges, spec, params.y_bins,
                                   params.input_bins)
          : HistogramConfig{};

  ScoreTable table;
  table.entries.resize(feasible.size());
  std::vector<std::string> errors(feasible.size());

  parallel_for(static_cast<std::int64_t>(feasible.size()), params.threads,
               [&](std::int64_t i) {
                 const RateAllocation& allocation = feasible[static_cast<std::size_t>(i)];
                 try {
                   const QuantizerBank bank = bank_for_allocation(ranges, spec, allocation);
                   const Dataset quantized = build_quantized_dataset(reference, bank, model);
                   const KldEstimate est =
                       params.estimator == EstimatorKind::histogram
                           ? kld_histogram_smoothed(reference, quantized, hist_config)
                           : kld_knn(reference, quantized, params.knn);
                   table.entries[static_cast<std::size_t>(i)] = {
                       allocation, est.value,
                       params.estimator == EstimatorKind::histogram
                           ? Criterion::kld_hist
                           : Criterion::kld_knn};
                 } catch (const std::exception& e) {
                   errors[static_cast<std::size_t>(i)] = e.what();
                 }
               });

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty())
      throw std::runtime_error("kld_allocation failed at candidate " +
                               to_string(feasible[i]) + ": " + errors[i]);
  }
  return table;
}

}  // namespace bitalloc

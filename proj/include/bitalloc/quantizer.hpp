#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bitalloc/types.hpp"

namespace bitalloc {

// Per-feature uniform scalar quantizer. Reconstruction levels are the 2^bits
// bin centers min + (i + 0.5) * step; inputs outside [min, max] clamp to the
// nearest extreme level; values on a bin boundary go to the upper bin.
struct QuantizerSpec {
  int feature_index = 0;
  double min = 0.0;
  double max = 1.0;
  int bits = 1;
  double step = 0.5;  // (max - min) / 2^bits

  std::int64_t levels() const { return std::int64_t{1} << bits; }
};

QuantizerSpec make_quantizer(int feature_index, double min, double max, int bits);

// Range taken from the sample min/max of one feature column.
QuantizerSpec fit_quantizer(Eigen::Ref<const Eigen::VectorXd> samples, int bits,
                            int feature_index = 0);

double quantize(const QuantizerSpec& spec, double x);

// Mean squared quantization error over a sample column.
double quantization_mse(const QuantizerSpec& spec,
                        Eigen::Ref<const Eigen::VectorXd> samples);

struct FeatureRange {
  double min = 0.0;
  double max = 1.0;
};

// Per-column min/max of an input matrix (one sample per row).
std::vector<FeatureRange> fit_feature_ranges(const RowMatrixXd& inputs);

// One spec per input feature, in feature order.
struct QuantizerBank {
  std::vector<QuantizerSpec> specs;

  int features() const { return static_cast<int>(specs.size()); }
};

QuantizerBank make_bank(const std::vector<FeatureRange>& ranges,
                        const std::vector<int>& bits_per_feature);

// Quantizes the first specs.size() entries of a row in place.
void quantize_row_inplace(const QuantizerBank& bank, Eigen::Ref<Eigen::RowVectorXd> x);

nlohmann::json bank_to_json(const QuantizerBank& bank);
QuantizerBank bank_from_json(const nlohmann::json& j);

}  // namespace bitalloc

#include "bitalloc/quantizer.hpp"

#include <cmath>
#include <stdexcept>

namespace bitalloc {

QuantizerSpec make_quantizer(int feature_index, double min, double max, int bits) {
  if (bits < 1 || bits > 52) throw std::invalid_argument("bits out of range");
  if (!(max > min)) throw std::invalid_argument("degenerate feature range");
  QuantizerSpec spec;
  spec.feature_index = feature_index;
  spec.min = min;
  spec.max = max;
  spec.bits = bits;
  spec.step = (max - min) / std::ldexp(1.0, bits);
  return spec;
}

QuantizerSpec fit_quantizer(Eigen::Ref<const Eigen::VectorXd> samples, int bits,
                            int feature_index) {
  if (samples.size() == 0) throw std::invalid_argument("empty feature column");
  const double lo = samples.minCoeff();
  const double hi = samples.maxCoeff();
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("non-finite input");
  if (lo == hi) throw std::invalid_argument("degenerate feature range");
  return make_quantizer(feature_index, lo, hi, bits);
}

double quantize(const QuantizerSpec& spec, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
  const std::int64_t last = spec.levels() - 1;
  std::int64_t idx;
  if (x <= spec.min) {
    idx = 0;
  } else if (x >= spec.max) {
    idx = last;
  } else {
    idx = static_cast<std::int64_t>(std::floor((x - spec.min) / spec.step));
    if (idx < 0) idx = 0;
    if (idx > last) idx = last;
  }
  return spec.min + (static_cast<double>(idx) + 0.5) * spec.step;
}

double quantization_mse(const QuantizerSpec& spec,
                        Eigen::Ref<const Eigen::VectorXd> samples) {
  if (samples.size() == 0) throw std::invalid_argument("empty feature column");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double e = samples[i] - quantize(spec, samples[i]);
    acc += e * e;
  }
  return acc / static_cast<double>(samples.size());
}

std::vector<FeatureRange> fit_feature_ranges(const RowMatrixXd& inputs) {
  if (inputs.rows() == 0) throw std::invalid_argument("empty feature column");
  std::vector<FeatureRange> ranges(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
    ranges[static_cast<std::size_t>(c)] = {inputs.col(c).minCoeff(),
                                           inputs.col(c).maxCoeff()};
  }
  return ranges;
}

QuantizerBank make_bank(const std::vector<FeatureRange>& ranges,
                        const std::vector<int>& bits_per_feature) {
  if (ranges.size() != bits_per_feature.size())
    throw std::invalid_argument("ranges/bits size mismatch");
  QuantizerBank bank;
  bank.specs.reserve(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    bank.specs.push_back(make_quantizer(static_cast<int>(i), ranges[i].min,
                                        ranges[i].max, bits_per_feature[i]));
  }
  return bank;
}

void quantize_row_inplace(const QuantizerBank& bank, Eigen::Ref<Eigen::RowVectorXd> x) {
  if (x.size() < static_cast<Eigen::Index>(bank.specs.size()))
    throw std::invalid_argument("row shorter than bank");
  for (const QuantizerSpec& spec : bank.specs) {
    x[spec.feature_index] = quantize(spec, x[spec.feature_index]);
  }
}

nlohmann::json bank_to_json(const QuantizerBank& bank) {
  nlohmann::json arr = nlohmann::json::array();
  for (const QuantizerSpec& s : bank.specs) {
    arr.push_back({{"feature", s.feature_index},
                   {"min", s.min},
                   {"max", s.max},
                   {"bits", s.bits}});
  }
  return arr;
}

QuantizerBank bank_from_json(const nlohmann::json& j) {
  QuantizerBank bank;
  for (const auto& item : j) {
    bank.specs.push_back(make_quantizer(item.at("feature").get<int>(),
                                        item.at("min").get<double>(),
                                        item.at("max").get<double>(),
                                        item.at("bits").get<int>()));
  }
  return bank;
}

}  // namespace bitalloc

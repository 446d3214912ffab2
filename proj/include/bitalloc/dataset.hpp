#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "bitalloc/types.hpp"

namespace bitalloc {

// Sample collection, one joint sample per row. For joint input-output data
// the layout is [features..., outputs...]; marginal sets hold features only.
struct Dataset {
  RowMatrixXd samples;
  std::vector<std::string> labels;  // one per column; may be empty

  Eigen::Index rows() const { return samples.rows(); }
  Eigen::Index dim() const { return samples.cols(); }
};

// Binary container: raw little-endian 64-bit floats in row-major order plus
// a "<path>.json" sidecar carrying {j, d, labels}. Extra sidecar fields are
// preserved on load into `extra` by callers that need them.
void save_dataset(const Dataset& ds, const std::filesystem::path& bin_path,
                  const std::string& extra_sidecar_json = "");
Dataset load_dataset(const std::filesystem::path& bin_path);

void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset import_dataset_csv(const std::filesystem::path& path);

}  // namespace bitalloc

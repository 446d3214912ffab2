#include "bitalloc/dataset.hpp"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bitalloc/io.hpp"

namespace bitalloc {

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  return bin_path.string() + ".json";
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& bin_path,
                  const std::string& extra_sidecar_json) {
  // Assumes a little-endian host (x86/ARM); doubles are written raw.
  const std::size_t n_bytes =
      static_cast<std::size_t>(ds.samples.size()) * sizeof(double);
  std::string bytes(n_bytes, '\0');
  if (n_bytes > 0) std::memcpy(bytes.data(), ds.samples.data(), n_bytes);
  io::write_file_atomic(bin_path, bytes);

  nlohmann::json side;
  if (!extra_sidecar_json.empty()) side = nlohmann::json::parse(extra_sidecar_json);
  side["j"] = ds.rows();
  side["d"] = ds.dim();
  side["labels"] = ds.labels;
  side["format"] = "f64le-rowmajor";
  io::write_file_atomic(sidecar_path(bin_path), side.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& bin_path) {
  const nlohmann::json side = nlohmann::json::parse(io::read_file(sidecar_path(bin_path)));
  const Eigen::Index j = side.at("j").get<Eigen::Index>();
  const Eigen::Index d = side.at("d").get<Eigen::Index>();
  const std::string bytes = io::read_file(bin_path);
  if (bytes.size() != static_cast<std::size_t>(j * d) * sizeof(double))
    throw std::runtime_error("dataset size mismatch: " + bin_path.string());

  Dataset ds;
  ds.samples.resize(j, d);
  if (!bytes.empty()) std::memcpy(ds.samples.data(), bytes.data(), bytes.size());
  if (side.contains("labels")) ds.labels = side["labels"].get<std::vector<std::string>>();
  return ds;
}

void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ostringstream out;
  for (Eigen::Index c = 0; c < ds.dim(); ++c) {
    if (c) out << ',';
    out << (c < static_cast<Eigen::Index>(ds.labels.size())
                ? ds.labels[static_cast<std::size_t>(c)]
                : "c" + std::to_string(c));
  }
  out << '\n';
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.dim(); ++c) {
      if (c) out << ',';
      out << io::format_double(ds.samples(r, c));
    }
    out << '\n';
  }
  io::write_file_atomic(path, out.str());
}

Dataset import_dataset_csv(const std::filesystem::path& path) {
  const io::CsvTable table = io::parse_csv(io::read_file(path));
  Dataset ds;
  ds.labels = table.header;
  const Eigen::Index d = static_cast<Eigen::Index>(table.header.size());
  ds.samples.resize(static_cast<Eigen::Index>(table.rows.size()), d);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (static_cast<Eigen::Index>(table.rows[r].size()) != d)
      throw std::runtime_error("ragged csv row in " + path.string());
    for (std::size_t c = 0; c < table.rows[r].size(); ++c) {
      ds.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          std::strtod(table.rows[r][c].c_str(), nullptr);
    }
  }
  return ds;
}

}  // namespace bitalloc

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "smoothcert/tensor.hpp"

namespace smoothcert {

enum class DatasetFormat {
  manifest,  // JSON manifest listing raw little-endian f32 files
  npy,       // directory holding inputs.npy and labels.npy
  png,       // directory of PNG images plus labels.csv
};

DatasetFormat parse_dataset_format(const std::string& s);
std::string to_string(DatasetFormat f);

struct DatasetItem {
  std::uint64_t id = 0;
  std::variant<InputTensor, VideoTensor> input;
  std::size_t label = 0;

  bool is_video() const noexcept { return std::holds_alternative<VideoTensor>(input); }
};

/// Loads every item in file order. Values are normalized to [0,1]; labels
/// outside [0, n_classes) and malformed entries raise LoadError naming the entry.
std::vector<DatasetItem> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                      std::size_t n_classes);

/// Writes items as a manifest dataset (manifest.json plus one .f32 file each).
void write_manifest_dataset(const std::filesystem::path& dir, const std::vector<DatasetItem>& items);

}  // namespace smoothcert

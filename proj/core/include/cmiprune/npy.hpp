#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cmiprune {

/// A C-order array in NPY format. Supported element types: "<f4", "<f8", "<i8".
struct NpyArray {
  std::string descr;
  std::vector<std::size_t> shape;
  std::vector<std::byte> data;

  [[nodiscard]] std::size_t count() const noexcept;
  [[nodiscard]] std::size_t item_size() const;

  [[nodiscard]] std::vector<float> as_f32() const;
  [[nodiscard]] std::vector<double> as_f64() const;  // accepts <f4 and <f8
  [[nodiscard]] std::vector<std::int64_t> as_i64() const;

  static NpyArray from(std::span<const float> values, std::vector<std::size_t> shape);
  static NpyArray from(std::span<const double> values, std::vector<std::size_t> shape);
  static NpyArray from(std::span<const std::int64_t> values, std::vector<std::size_t> shape);
};

/// Full file image: magic, version 1.0 header padded to a multiple of 64, payload.
std::string encode_npy(const NpyArray& array);
NpyArray decode_npy(std::string_view bytes, std::string_view origin = "<memory>");

NpyArray read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, const NpyArray& array);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace cmiprune

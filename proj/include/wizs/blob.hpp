#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wizs/embedding.hpp"

namespace wizs {

// On-disk embedding blob, all integers little-endian:
//   offset  0  magic "WIZS"
//   offset  4  u32 version (1)
//   offset  8  u32 dim
//   offset 12  u64 count
//   offset 20  u8  dtype (1 = float32)
//   offset 21  count * dim float32, row-major (one embedding per row)
inline constexpr std::size_t kBlobHeaderSize = 21;
inline constexpr std::uint32_t kBlobVersion = 1;
inline constexpr std::uint8_t kBlobDtypeF32 = 1;

struct EmbeddingBlob {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::vector<float> values;  // count * dim, row-major

  /// Raw (unnormalized) vectors as the columns of a dim x count matrix.
  Matrix<double> columns() const;
  static EmbeddingBlob from_columns(const Eigen::Ref<const Matrix<double>>& columns);
};

std::string encode_blob(const EmbeddingBlob& blob);
/// `source` names the blob in error messages.
EmbeddingBlob decode_blob(std::string_view bytes, std::string_view source = "blob");

EmbeddingBlob read_blob(const std::filesystem::path& path);
void write_blob(const std::filesystem::path& path, const EmbeddingBlob& blob);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace wizs

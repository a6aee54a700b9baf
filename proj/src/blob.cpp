#include "wizs/blob.hpp"

#include <fmt/format.h>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "wizs/error.hpp"

namespace wizs {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out += static_cast<char>((value >> (8 * i)) & 0xFF);
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

}  // namespace

Matrix<double> EmbeddingBlob::columns() const {
  Matrix<double> m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
  for (std::uint64_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      m(c, static_cast<Eigen::Index>(r)) = values[r * dim + c];
    }
  }
  return m;
}

EmbeddingBlob EmbeddingBlob::from_columns(const Eigen::Ref<const Matrix<double>>& columns) {
  EmbeddingBlob blob;
  blob.dim = static_cast<std::uint32_t>(columns.rows());
  blob.count = static_cast<std::uint64_t>(columns.cols());
  blob.values.resize(blob.dim * blob.count);
  for (std::uint64_t r = 0; r < blob.count; ++r) {
    for (std::uint32_t c = 0; c < blob.dim; ++c) {
      blob.values[r * blob.dim + c] = static_cast<float>(columns(c, static_cast<Eigen::Index>(r)));
    }
  }
  return blob;
}

std::string encode_blob(const EmbeddingBlob& blob) {
  if (blob.values.size() != blob.dim * blob.count) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("blob holds {} values, expected dim {} x count {}",
                            blob.values.size(), blob.dim, blob.count));
  }
  std::string out;
  out.reserve(kBlobHeaderSize + 4 * blob.values.size());
  out += "WIZS";
  put_le<std::uint32_t>(out, kBlobVersion);
  put_le<std::uint32_t>(out, blob.dim);
  put_le<std::uint64_t>(out, blob.count);
  put_le<std::uint8_t>(out, kBlobDtypeF32);
  for (float v : blob.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

EmbeddingBlob decode_blob(std::string_view bytes, std::string_view source) {
  auto corrupt = [&](const std::string& what) {
    return Error(ErrorCode::kCorruptBlob, fmt::format("{}: {}", source, what));
  };
  if (bytes.size() < kBlobHeaderSize) {
    throw corrupt(fmt::format("header truncated at byte offset {} (need {} bytes)", bytes.size(),
                              kBlobHeaderSize));
  }
  if (bytes.substr(0, 4) != "WIZS") throw corrupt("bad magic at byte offset 0");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kBlobVersion) {
    throw corrupt(fmt::format("unsupported version {} at byte offset 4", version));
  }
  EmbeddingBlob blob;
  blob.dim = get_le<std::uint32_t>(bytes, 8);
  blob.count = get_le<std::uint64_t>(bytes, 12);
  const auto dtype = get_le<std::uint8_t>(bytes, 20);
  if (dtype != kBlobDtypeF32) {
    throw corrupt(fmt::format("unsupported dtype tag {} at byte offset 20", dtype));
  }
  if (blob.dim == 0) throw corrupt("dim is 0 at byte offset 8");
  const std::uint64_t payload = bytes.size() - kBlobHeaderSize;
  if (blob.count > payload / 4 / blob.dim || payload != 4ULL * blob.dim * blob.count) {
    const std::uint64_t expected = kBlobHeaderSize + 4ULL * blob.dim * blob.count;
    throw corrupt(fmt::format(
        "length mismatch: dim {} x count {} needs {} bytes, data ends at byte offset {}",
        blob.dim, blob.count, expected, bytes.size()));
  }
  blob.values.resize(blob.dim * blob.count);
  for (std::uint64_t i = 0; i < blob.values.size(); ++i) {
    const std::size_t offset = kBlobHeaderSize + 4 * i;
    const float v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset));
    if (!std::isfinite(v)) {
      throw corrupt(fmt::format("non-finite value at row {} column {} (byte offset {})",
                                i / blob.dim, i % blob.dim, offset));
    }
    blob.values[i] = v;
  }
  return blob;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed for '" + path.string() + "'");
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + fmt::format(".tmp.{}.{}", counter++,
                                               std::hash<std::thread::id>{}(
                                                   std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot rename into '" + path.string() + "'");
  }
}

EmbeddingBlob read_blob(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingBlob, "'" + path.string() + "' does not exist");
  }
  return decode_blob(read_file(path), path.string());
}

void write_blob(const std::filesystem::path& path, const EmbeddingBlob& blob) {
  write_file_atomic(path, encode_blob(blob));
}

}  // namespace wizs

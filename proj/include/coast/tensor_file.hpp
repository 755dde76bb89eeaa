#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coast/types.hpp"

namespace coast {

/// In-memory image of a TensorFile: a row-major f64 array of rank 1 or 2
/// (any rank round-trips, the CLI only uses these two).
///
/// On disk:
///   "COASTT01" | dtype u8 (0x01 = f64 LE) | rank u8 | dims u64 LE × rank
///   | payload f64 LE × Πdims | FNV-1a-64 of everything before it, u64 LE
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::size_t rank() const { return dims.size(); }

  static Tensor from(const Vector &v);
  static Tensor from(const RowMatrix &m);
  static Tensor from(const Matrix &m);

  /// Rank-1 tensors only; throws Format otherwise.
  Vector to_vector() const;
  /// Rank-2 tensors; a rank-1 tensor becomes a single row.
  RowMatrix to_rows() const;
  /// Rank-2 tensors only.
  Matrix to_matrix() const;
};

inline constexpr char kTensorMagic[8] = {'C', 'O', 'A', 'S', 'T', 'T', '0', '1'};
inline constexpr std::uint8_t kDtypeF64 = 0x01;

/// 64-bit FNV-1a; `state` chains incremental updates.
std::uint64_t fnv1a64(const void *data, std::size_t len,
                      std::uint64_t state = 0xcbf29ce484222325ULL);

std::vector<std::uint8_t> encode_tensor(const Tensor &t);
/// Throws Format with a specific message ("bad magic", "checksum mismatch",
/// "truncated payload", ...).
Tensor decode_tensor(const std::vector<std::uint8_t> &bytes);

void write_tensor(const std::filesystem::path &path, const Tensor &t);
/// Streams the file, verifying the checksum as it goes.
Tensor read_tensor(const std::filesystem::path &path);

/// FNV-1a-64 of a file's bytes as 16 lowercase hex digits.
std::string file_digest(const std::filesystem::path &path);

/// Plain-text interop: one row per line, comma separated, each value in the
/// shortest form that reads back to the identical double.
void write_csv_matrix(const std::filesystem::path &path, const RowMatrix &m);
RowMatrix read_csv_matrix(const std::filesystem::path &path);

}  // namespace coast

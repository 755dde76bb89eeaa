#include "coast/tensor_file.hpp"

#include <array>
#include <bit>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "coast/error.hpp"

namespace coast {

namespace {

static_assert(std::endian::native == std::endian::little,
              "TensorFile I/O assumes a little-endian host");

constexpr std::size_t kHeaderFixed = 8 + 1 + 1;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;

void put_u64(std::vector<std::uint8_t> &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t *p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t element_count(const std::vector<std::uint64_t> &dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > kMaxElements / d) {
      throw Error(ErrorCode::Format, "tensor dimensions overflow");
    }
    n *= d;
  }
  return n;
}

std::vector<std::uint8_t> encode_header(const Tensor &t) {
  std::vector<std::uint8_t> out(kTensorMagic, kTensorMagic + 8);
  out.push_back(kDtypeF64);
  if (t.dims.size() > 255) throw Error(ErrorCode::Format, "rank exceeds 255");
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put_u64(out, d);
  return out;
}

/// Parses magic, dtype, rank and dims from the first bytes of a file.
std::size_t parse_header(const std::uint8_t *p, std::size_t avail,
                         std::vector<std::uint64_t> &dims) {
  if (avail < kHeaderFixed) throw Error(ErrorCode::Format, "truncated header");
  if (std::memcmp(p, kTensorMagic, 8) != 0) {
    throw Error(ErrorCode::Format, "bad magic (not a COASTT01 tensor file)");
  }
  if (p[8] != kDtypeF64) {
    std::ostringstream os;
    os << "unsupported dtype code 0x" << std::hex << int(p[8]);
    throw Error(ErrorCode::Format, os.str());
  }
  const std::size_t rank = p[9];
  const std::size_t need = kHeaderFixed + 8 * rank;
  if (avail < need) throw Error(ErrorCode::Format, "truncated header");
  dims.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) dims[i] = get_u64(p + kHeaderFixed + 8 * i);
  return need;
}

Error io_error(const std::filesystem::path &path, const char *what) {
  return Error(ErrorCode::Io, std::string(what) + " '" + path.string() +
                                  "': " + std::strerror(errno));
}

}  // namespace

std::uint64_t fnv1a64(const void *data, std::size_t len, std::uint64_t state) {
  const auto *p = static_cast<const std::uint8_t *>(data);
  for (std::size_t i = 0; i < len; ++i) {
    state ^= p[i];
    state *= 0x100000001b3ULL;
  }
  return state;
}

Tensor Tensor::from(const Vector &v) {
  Tensor t;
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

Tensor Tensor::from(const RowMatrix &m) {
  Tensor t;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

Tensor Tensor::from(const Matrix &m) { return from(RowMatrix(m)); }

Vector Tensor::to_vector() const {
  if (rank() != 1) {
    throw Error(ErrorCode::Format,
                "expected a rank-1 tensor, got rank " + std::to_string(rank()));
  }
  return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

RowMatrix Tensor::to_rows() const {
  if (rank() == 1) {
    return Eigen::Map<const RowMatrix>(data.data(), 1, static_cast<Index>(dims[0]));
  }
  if (rank() != 2) {
    throw Error(ErrorCode::Format,
                "expected a rank-2 tensor, got rank " + std::to_string(rank()));
  }
  return Eigen::Map<const RowMatrix>(data.data(), static_cast<Index>(dims[0]),
                                     static_cast<Index>(dims[1]));
}

Matrix Tensor::to_matrix() const {
  if (rank() != 2) {
    throw Error(ErrorCode::Format,
                "expected a rank-2 tensor, got rank " + std::to_string(rank()));
  }
  return Matrix(to_rows());
}

std::vector<std::uint8_t> encode_tensor(const Tensor &t) {
  if (element_count(t.dims) != t.data.size()) {
    throw Error(ErrorCode::Format, "tensor payload does not match its dimensions");
  }
  auto out = encode_header(t);
  const std::size_t off = out.size();
  out.resize(off + 8 * t.data.size());
  std::memcpy(out.data() + off, t.data.data(), 8 * t.data.size());
  put_u64(out, fnv1a64(out.data(), out.size()));
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t> &bytes) {
  Tensor t;
  const std::size_t hdr = parse_header(bytes.data(), bytes.size(), t.dims);
  const std::uint64_t n = element_count(t.dims);
  const std::size_t want = hdr + 8 * n + 8;
  if (bytes.size() < want) throw Error(ErrorCode::Format, "truncated payload");
  if (bytes.size() > want) throw Error(ErrorCode::Format, "trailing bytes after checksum");
  const std::uint64_t stored = get_u64(bytes.data() + hdr + 8 * n);
  if (fnv1a64(bytes.data(), hdr + 8 * n) != stored) {
    throw Error(ErrorCode::Format, "checksum mismatch");
  }
  t.data.resize(n);
  std::memcpy(t.data.data(), bytes.data() + hdr, 8 * n);
  return t;
}

void write_tensor(const std::filesystem::path &path, const Tensor &t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error(path, "cannot open for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error(path, "write failed for");
}

Tensor read_tensor(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open");
  try {
    std::array<std::uint8_t, kHeaderFixed + 8 * 255> head{};
    in.read(reinterpret_cast<char *>(head.data()), kHeaderFixed);
    if (in.gcount() != static_cast<std::streamsize>(kHeaderFixed)) {
      throw Error(ErrorCode::Format, "truncated header");
    }
    const std::size_t rank = head[9];
    in.read(reinterpret_cast<char *>(head.data() + kHeaderFixed),
            static_cast<std::streamsize>(8 * rank));
    const std::size_t got = kHeaderFixed + static_cast<std::size_t>(in.gcount());
    Tensor t;
    const std::size_t hdr = parse_header(head.data(), got, t.dims);
    std::uint64_t hash = fnv1a64(head.data(), hdr);
    const std::uint64_t n = element_count(t.dims);

    // Stream the payload in chunks, hashing as we go.
    t.data.resize(n);
    auto *dst = reinterpret_cast<char *>(t.data.data());
    std::uint64_t remaining = 8 * n;
    constexpr std::uint64_t kChunk = 1 << 20;
    while (remaining > 0) {
      const auto len = static_cast<std::streamsize>(std::min(remaining, kChunk));
      in.read(dst, len);
      if (in.gcount() != len) throw Error(ErrorCode::Format, "truncated payload");
      hash = fnv1a64(dst, static_cast<std::size_t>(len), hash);
      dst += len;
      remaining -= static_cast<std::uint64_t>(len);
    }
    std::array<std::uint8_t, 8> tail{};
    in.read(reinterpret_cast<char *>(tail.data()), 8);
    if (in.gcount() != 8) throw Error(ErrorCode::Format, "missing checksum");
    if (in.peek() != std::char_traits<char>::eof()) {
      throw Error(ErrorCode::Format, "trailing bytes after checksum");
    }
    if (get_u64(tail.data()) != hash) throw Error(ErrorCode::Format, "checksum mismatch");
    return t;
  } catch (const Error &e) {
    throw e.with_context(path.string());
  }
}

std::string file_digest(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_csv_matrix(const std::filesystem::path &path, const RowMatrix &m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error(path, "cannot open for writing");
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j));
      if (j) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw io_error(path, "write failed for");
}

RowMatrix read_csv_matrix(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw io_error(path, "cannot open");
  std::vector<double> vals;
  Index cols = -1, rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Index c = 0;
    const char *p = line.data();
    const char *end = p + line.size();
    while (true) {
      while (p < end && *p == ' ') ++p;
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        std::ostringstream os;
        os << path.string() << ": line " << rows + 1 << ", field " << c + 1
           << " is not a number";
        throw Error(ErrorCode::Format, os.str());
      }
      vals.push_back(v);
      ++c;
      p = res.ptr;
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (*p != ',') {
        std::ostringstream os;
        os << path.string() << ": line " << rows + 1 << ": unexpected character";
        throw Error(ErrorCode::Format, os.str());
      }
      ++p;
    }
    if (cols >= 0 && c != cols) {
      std::ostringstream os;
      os << path.string() << ": line " << rows + 1 << " has " << c
         << " fields, expected " << cols;
      throw Error(ErrorCode::Format, os.str());
    }
    cols = c;
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::Format, path.string() + ": empty CSV");
  return Eigen::Map<const RowMatrix>(vals.data(), rows, cols);
}

}  // namespace coast

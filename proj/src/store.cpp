#include "sbi/store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "sbi/errors.hpp"

namespace sbi::store {
namespace {

using Kind = FormatError::Kind;

constexpr std::array<char, 4> kKeyMagic{'S', 'B', 'K', '1'};
constexpr std::array<char, 4> kDbMagic{'S', 'B', 'D', '1'};
constexpr std::array<char, 4> kTokenMagic{'S', 'B', 'T', '1'};

template <typename T>
void put_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  auto bits = std::bit_cast<U>(value);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, sizeof(T));
}

template <typename T>
T get_le(const char* buf) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(buf[i])) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

void put_matrix(std::ostream& os, const Matrix& m) {
  const auto count = static_cast<std::size_t>(m.size());
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < count; ++i) put_le(os, m.data()[i]);
  }
}

// Fixed-size reads that turn short reads into truncation errors.
class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  void bytes(char* out, std::size_t len) {
    in_.read(out, static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in_.gcount()) != len) {
      throw FormatError(Kind::kTruncated, what_ + ": truncated");
    }
  }

  template <typename T>
  T scalar() {
    char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    return get_le<T>(buf);
  }

  Matrix matrix(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    Matrix m(d, d);
    const std::size_t count = dim * dim;
    if constexpr (std::endian::native == std::endian::little) {
      bytes(reinterpret_cast<char*>(m.data()), count * sizeof(double));
    } else {
      for (std::size_t i = 0; i < count; ++i) m.data()[i] = scalar<double>();
    }
    if (!m.allFinite()) throw FormatError(Kind::kIntegrity, what_ + ": non-finite matrix entry");
    return m;
  }

 private:
  std::istream& in_;
  std::string what_;
};

struct CommonHeader {
  std::uint16_t version;
  std::uint16_t flags;
  std::uint32_t n;
};

CommonHeader read_common(Reader& r, const std::array<char, 4>& magic, const std::string& what) {
  std::array<char, 4> got{};
  r.bytes(got.data(), got.size());
  if (got != magic) throw FormatError(Kind::kBadMagic, what + ": bad magic");
  CommonHeader h{};
  h.version = r.scalar<std::uint16_t>();
  if (h.version != kVersion) {
    throw FormatError(Kind::kBadVersion, what + ": unsupported version " + std::to_string(h.version));
  }
  h.flags = r.scalar<std::uint16_t>();
  h.n = r.scalar<std::uint32_t>();
  if (h.n == 0) throw FormatError(Kind::kIntegrity, what + ": zero dimension");
  return h;
}

void write_common(std::ostream& os, const std::array<char, 4>& magic, std::uint16_t flags,
                  std::size_t n) {
  os.write(magic.data(), magic.size());
  put_le<std::uint16_t>(os, kVersion);
  put_le<std::uint16_t>(os, flags);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(n));
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::kIo, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(Kind::kIo, "cannot create " + path.string());
  return out;
}

void finish(std::ostream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw FormatError(Kind::kIo, "write failed: " + path.string());
}

void check_exact_size(const std::filesystem::path& path, std::uint64_t expected,
                      const std::string& what) {
  const auto actual = std::filesystem::file_size(path);
  if (actual < expected) throw FormatError(Kind::kTruncated, what + ": truncated");
  if (actual > expected) {
    throw FormatError(Kind::kIntegrity, what + ": " + std::to_string(actual - expected) +
                                            " trailing bytes");
  }
}

void check_matrix_dim(const Matrix& m, std::size_t dim, const char* what) {
  const auto d = static_cast<Eigen::Index>(dim);
  if (m.rows() != d || m.cols() != d) {
    throw DimensionError(std::string(what) + ": matrix is not (n+5)x(n+5)");
  }
}

}  // namespace

std::uint64_t matrix_bytes(std::size_t n) {
  const std::uint64_t d = n + 5;
  return d * d * sizeof(double);
}

std::uint64_t key_file_size(std::size_t n) {
  return kKeyHeaderSize + (n + 5) * sizeof(std::uint32_t) + 4 * matrix_bytes(n);
}

std::uint64_t record_size(std::size_t n) { return sizeof(std::uint64_t) + 2 * matrix_bytes(n); }

std::uint64_t token_file_size(std::size_t n) { return kTokenHeaderSize + matrix_bytes(n); }

void write_key(const std::filesystem::path& path, const SystemParams& params, const SecretKey& sk,
               std::uint16_t flags) {
  const std::size_t d = params.ext_dim();
  if (sk.pi.size() != d) throw DimensionError("write_key: permutation size != n+5");
  for (const Matrix* m : {&sk.m1, &sk.m1inv, &sk.m2, &sk.m2inv}) check_matrix_dim(*m, d, "write_key");
  auto out = open_out(path);
  write_common(out, kKeyMagic, flags, params.n);
  put_le<double>(out, params.theta);
  for (auto idx : sk.pi.mapping()) put_le<std::uint32_t>(out, idx);
  put_matrix(out, sk.m1);
  put_matrix(out, sk.m1inv);
  put_matrix(out, sk.m2);
  put_matrix(out, sk.m2inv);
  finish(out, path);
}

KeyFile read_key(const std::filesystem::path& path) {
  auto in = open_in(path);
  Reader r(in, "key file " + path.string());
  const CommonHeader h = read_common(r, kKeyMagic, "key file");
  check_exact_size(path, key_file_size(h.n), "key file");
  const double theta = r.scalar<double>();
  if (!std::isfinite(theta) || theta < 0.0) throw FormatError(Kind::kIntegrity, "key file: bad theta");

  const std::size_t d = h.n + 5;
  std::vector<std::uint32_t> mapping(d);
  for (auto& idx : mapping) idx = r.scalar<std::uint32_t>();
  if (!is_bijection(mapping)) {
    throw FormatError(Kind::kIntegrity, "key file: permutation is not a bijection");
  }

  KeyFile kf;
  kf.flags = h.flags;
  kf.params = setup(h.n, theta);
  kf.key.m1 = r.matrix(d);
  kf.key.m1inv = r.matrix(d);
  kf.key.m2 = r.matrix(d);
  kf.key.m2inv = r.matrix(d);
  kf.key.pi = Permutation(std::move(mapping));
  return kf;
}

void write_token(const std::filesystem::path& path, std::size_t n, const QueryToken& tok,
                 std::uint16_t flags) {
  check_matrix_dim(tok.cy, n + 5, "write_token");
  auto out = open_out(path);
  write_common(out, kTokenMagic, flags, n);
  put_matrix(out, tok.cy);
  finish(out, path);
}

TokenFile read_token(const std::filesystem::path& path, std::optional<std::size_t> expected_n) {
  auto in = open_in(path);
  Reader r(in, "token file " + path.string());
  const CommonHeader h = read_common(r, kTokenMagic, "token file");
  if (expected_n && *expected_n != h.n) {
    throw FormatError(Kind::kDimension, "token has n=" + std::to_string(h.n) +
                                            " but the database has n=" + std::to_string(*expected_n));
  }
  check_exact_size(path, token_file_size(h.n), "token file");
  TokenFile tf;
  tf.n = h.n;
  tf.flags = h.flags;
  tf.token.cy = r.matrix(h.n + 5);
  return tf;
}

void create_database(const std::filesystem::path& path, std::size_t n, std::uint16_t flags) {
  if (n == 0) throw ConfigError("create_database: n must be positive");
  auto out = open_out(path);
  write_common(out, kDbMagic, flags, n);
  put_le<std::uint64_t>(out, 0);
  finish(out, path);
}

DatabaseHeader read_database_header(const std::filesystem::path& path) {
  auto in = open_in(path);
  Reader r(in, "database " + path.string());
  const CommonHeader h = read_common(r, kDbMagic, "database");
  DatabaseHeader dh;
  dh.version = h.version;
  dh.flags = h.flags;
  dh.n = h.n;
  dh.record_count = r.scalar<std::uint64_t>();
  const auto size = std::filesystem::file_size(path);
  if (size < kDatabaseHeaderSize + dh.record_count * record_size(dh.n)) {
    throw FormatError(Kind::kTruncated, "database: header claims " +
                                            std::to_string(dh.record_count) +
                                            " records but the file is shorter");
  }
  return dh;
}

void append_record(const std::filesystem::path& path, const EncryptedTemplate& ct) {
  const DatabaseHeader h = read_database_header(path);
  const auto d = static_cast<Eigen::Index>(h.n + 5);
  if (ct.cp.rows() != d || ct.cp.cols() != d || ct.cq.rows() != d || ct.cq.cols() != d) {
    throw FormatError(Kind::kDimension, "record " + std::to_string(ct.id) +
                                            " does not match database dimension n=" +
                                            std::to_string(h.n));
  }
  std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
  if (!io) throw FormatError(Kind::kIo, "cannot open " + path.string() + " for append");

  io.seekp(static_cast<std::streamoff>(kDatabaseHeaderSize + h.record_count * record_size(h.n)));
  put_le<std::uint64_t>(io, ct.id);
  put_matrix(io, ct.cp);
  put_matrix(io, ct.cq);
  io.flush();
  io.seekp(static_cast<std::streamoff>(kRecordCountOffset));
  put_le<std::uint64_t>(io, h.record_count + 1);
  finish(io, path);
}

DatabaseScanner::DatabaseScanner(const std::filesystem::path& path)
    : header_(read_database_header(path)) {
  in_ = open_in(path);
  in_.seekg(static_cast<std::streamoff>(kDatabaseHeaderSize));
}

std::optional<EncryptedTemplate> DatabaseScanner::next() {
  if (consumed_ == header_.record_count) return std::nullopt;
  Reader r(in_, "database record " + std::to_string(consumed_));
  EncryptedTemplate ct;
  ct.id = r.scalar<std::uint64_t>();
  ct.cp = r.matrix(header_.n + 5);
  ct.cq = r.matrix(header_.n + 5);
  ++consumed_;
  return ct;
}

std::string describe(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::array<char, 4> magic{};
  Reader r(in, path.string());
  r.bytes(magic.data(), magic.size());
  in.seekg(0);
  std::ostringstream os;
  const auto size = std::filesystem::file_size(path);
  if (magic == kKeyMagic) {
    const KeyFile kf = read_key(path);
    os << "type: key\nversion: " << kVersion << "\nflags: " << kf.flags << "\nn: " << kf.params.n
       << "\ntheta: " << kf.params.theta << "\next_dim: " << kf.params.ext_dim()
       << "\nbytes: " << size << "\n";
  } else if (magic == kDbMagic) {
    const DatabaseHeader h = read_database_header(path);
    os << "type: database\nversion: " << h.version << "\nflags: " << h.flags << "\nn: " << h.n
       << "\next_dim: " << h.n + 5 << "\nrecords: " << h.record_count
       << "\nrecord_bytes: " << record_size(h.n) << "\nbytes: " << size << "\n";
  } else if (magic == kTokenMagic) {
    const TokenFile tf = read_token(path);
    os << "type: token\nversion: " << kVersion << "\nflags: " << tf.flags << "\nn: " << tf.n
       << "\next_dim: " << tf.n + 5 << "\nbytes: " << size << "\n";
  } else {
    throw FormatError(Kind::kBadMagic, path.string() + ": unrecognized magic");
  }
  return os.str();
}

}  // namespace sbi::store

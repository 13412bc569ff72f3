#pragma once

// Bit-exact binary formats. All integers and doubles are little-endian;
// matrices are (n+5)^2 IEEE-754 doubles in row-major order.
//
//   KeyFile      "SBK1" u16 version, u16 flags, u32 n, f64 theta,
//                (n+5) x u32 permutation (0-based), M1, M1inv, M2, M2inv
//   DatabaseFile "SBD1" u16 version, u16 flags, u32 n, u64 record_count,
//                records of (u64 id, Cp, Cq)
//   TokenFile    "SBT1" u16 version, u16 flags, u32 n, Cy

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "sbi/scheme.hpp"

namespace sbi::store {

inline constexpr std::uint16_t kVersion = 1;

// Set on files produced from a test-mode key; required by debug tooling
// that exposes raw evaluation values.
inline constexpr std::uint16_t kFlagTestMode = 0x0001;

inline constexpr std::size_t kKeyHeaderSize = 4 + 2 + 2 + 4 + 8;
inline constexpr std::size_t kDatabaseHeaderSize = 4 + 2 + 2 + 4 + 8;
inline constexpr std::size_t kTokenHeaderSize = 4 + 2 + 2 + 4;
inline constexpr std::size_t kRecordCountOffset = 12;

std::uint64_t matrix_bytes(std::size_t n);
std::uint64_t key_file_size(std::size_t n);
// 8 + 2 (n+5)^2 8
std::uint64_t record_size(std::size_t n);
std::uint64_t token_file_size(std::size_t n);

struct KeyFile {
  SystemParams params;
  SecretKey key;
  std::uint16_t flags = 0;
};

void write_key(const std::filesystem::path& path, const SystemParams& params, const SecretKey& sk,
               std::uint16_t flags = 0);
KeyFile read_key(const std::filesystem::path& path);

struct TokenFile {
  std::size_t n = 0;
  std::uint16_t flags = 0;
  QueryToken token;
};

void write_token(const std::filesystem::path& path, std::size_t n, const QueryToken& tok,
                 std::uint16_t flags = 0);
// With expected_n set, a token of another dimension is a kDimension error.
TokenFile read_token(const std::filesystem::path& path,
                     std::optional<std::size_t> expected_n = std::nullopt);

struct DatabaseHeader {
  std::uint16_t version = kVersion;
  std::uint16_t flags = 0;
  std::size_t n = 0;
  std::uint64_t record_count = 0;
};

// Creates (or truncates to) an empty database.
void create_database(const std::filesystem::path& path, std::size_t n, std::uint16_t flags = 0);

// Appends one record. The record bytes land before the count is bumped, so
// a concurrent reader only ever sees a complete prefix.
void append_record(const std::filesystem::path& path, const EncryptedTemplate& ct);

DatabaseHeader read_database_header(const std::filesystem::path& path);

// Streams records in append order holding one record at a time.
class DatabaseScanner {
 public:
  explicit DatabaseScanner(const std::filesystem::path& path);

  const DatabaseHeader& header() const { return header_; }

  std::optional<EncryptedTemplate> next();

 private:
  std::ifstream in_;
  DatabaseHeader header_;
  std::uint64_t consumed_ = 0;
};

// Human-readable header summary for any of the three formats.
std::string describe(const std::filesystem::path& path);

}  // namespace sbi::store

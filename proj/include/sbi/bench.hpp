#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sbi/matcore.hpp"

namespace sbi::bench {

enum class Op { kTransform, kTokenGen, kEvaluate, kIdentify };

std::string_view op_name(Op op);
// Throws ConfigError on an unknown name.
Op parse_op(std::string_view name);

struct BenchRow {
  std::size_t n = 0;
  Op op = Op::kEvaluate;
  std::size_t reps = 0;
  double median_s = 0.0;
  double mean_s = 0.0;
  double stddev_s = 0.0;

  bool operator==(const BenchRow&) const = default;
};

struct SweepOptions {
  std::vector<Op> ops{Op::kTransform, Op::kTokenGen, Op::kEvaluate, Op::kIdentify};
  std::size_t reps = 5;
  // Records scanned per identify measurement.
  std::size_t identify_records = 4;
  unsigned identify_jobs = 1;
  // Evict caches before each evaluate/identify rep so every template is read
  // from memory, as in a real database scan.
  bool cold_cache = true;
};

// Per n: fresh key, one template, one token; one untimed warm-up call, then
// `reps` timed calls per op. Throws ConfigError for empty ns, n == 0 or
// reps < 3.
std::vector<BenchRow> sweep(std::span<const std::size_t> ns, const SweepOptions& opts, Rng& rng);

// Least-squares slope of log(median_s) against log(n). Needs >= 4 rows of a
// single op spanning at least 8x in n.
double fit_loglog_slope(std::span<const BenchRow> rows);

std::vector<BenchRow> rows_for(std::span<const BenchRow> rows, Op op);

// Header n,op,reps,median_s,mean_s,stddev_s; rows ordered by (op, n).
std::string emit_csv(std::span<const BenchRow> rows);

// Inverse of emit_csv; lines starting with '#' are comments.
std::vector<BenchRow> parse_csv(std::string_view text);

// "# key: value" lines describing the host.
std::string machine_comment();

}  // namespace sbi::bench

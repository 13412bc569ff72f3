#include "sbi/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "sbi/errors.hpp"
#include "sbi/scheme.hpp"

namespace sbi::bench {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::string_view kOpNames[] = {"transform", "token_gen", "evaluate", "identify"};

// Larger than any last-level cache we expect to meet.
void evict_caches() {
  static std::vector<std::uint64_t> junk(std::size_t{64} << 17);  // 64 MiB
  static std::uint64_t salt = 0;
  ++salt;
  for (std::size_t i = 0; i < junk.size(); i += 8) junk[i] += salt;
}

template <typename F>
BenchRow measure(std::size_t n, Op op, std::size_t reps, bool cold, F&& fn) {
  fn();  // warm-up
  std::vector<double> secs;
  secs.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    if (cold) evict_caches();
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    secs.push_back(std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9));
  }
  BenchRow row;
  row.n = n;
  row.op = op;
  row.reps = reps;
  row.mean_s = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(reps);
  double var = 0.0;
  for (double s : secs) var += (s - row.mean_s) * (s - row.mean_s);
  row.stddev_s = std::sqrt(var / static_cast<double>(reps));
  std::sort(secs.begin(), secs.end());
  row.median_s = reps % 2 == 1 ? secs[reps / 2] : 0.5 * (secs[reps / 2 - 1] + secs[reps / 2]);
  return row;
}

// Keeps the optimizer from discarding benchmark results.
volatile double g_sink = 0.0;

}  // namespace

std::string_view op_name(Op op) { return kOpNames[static_cast<int>(op)]; }

Op parse_op(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (kOpNames[i] == name) return static_cast<Op>(i);
  }
  throw ConfigError("unknown benchmark op '" + std::string(name) + "'");
}

std::vector<BenchRow> sweep(std::span<const std::size_t> ns, const SweepOptions& opts, Rng& rng) {
  if (ns.empty()) throw ConfigError("sweep: no dimensions given");
  if (opts.reps < 3) throw ConfigError("sweep: reps must be at least 3");
  std::vector<BenchRow> rows;
  const RandomnessConfig cfg;
  for (std::size_t n : ns) {
    if (n == 0) throw ConfigError("sweep: dimensions must be positive");
    const SystemParams params = setup(n, 100.0);
    const SecretKey key = keygen(params, rng);
    PlainTemplate x, y;
    x.id = 1;
    x.features.resize(n);
    y.features.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      x.features[i] = rng.uniform(0.0, 255.0);
      y.features[i] = rng.uniform(0.0, 255.0);
    }
    const EncryptedTemplate ct = transform(key, params, x, rng, cfg);
    const QueryToken tok = token_gen(key, params, y, rng, cfg);
    const PreparedToken prepared(tok);

    for (Op op : opts.ops) {
      switch (op) {
        case Op::kTransform:
          rows.push_back(measure(n, op, opts.reps, false, [&] {
            g_sink = g_sink + transform(key, params, x, rng, cfg).cp(0, 0);
          }));
          break;
        case Op::kTokenGen:
          rows.push_back(measure(n, op, opts.reps, false, [&] {
            g_sink = g_sink + token_gen(key, params, y, rng, cfg).cy(0, 0);
          }));
          break;
        case Op::kEvaluate:
          rows.push_back(measure(n, op, opts.reps, opts.cold_cache,
                                 [&] { g_sink = g_sink + prepared.value(ct); }));
          break;
        case Op::kIdentify: {
          std::vector<EncryptedTemplate> db(std::max<std::size_t>(opts.identify_records, 1), ct);
          for (std::size_t i = 0; i < db.size(); ++i) db[i].id = i;
          IdentifyOptions io;
          io.jobs = opts.identify_jobs;
          rows.push_back(measure(n, op, opts.reps, opts.cold_cache, [&] {
            g_sink = g_sink + static_cast<double>(identify(db, tok, io).size());
          }));
          break;
        }
      }
    }
  }
  return rows;
}

double fit_loglog_slope(std::span<const BenchRow> rows) {
  if (rows.size() < 4) throw ConfigError("fit_loglog_slope: need at least 4 rows");
  std::size_t lo = rows[0].n, hi = rows[0].n;
  for (const auto& r : rows) {
    if (r.op != rows[0].op) throw ConfigError("fit_loglog_slope: rows mix operations");
    if (!(r.median_s > 0.0) || r.n == 0) throw ConfigError("fit_loglog_slope: non-positive entry");
    lo = std::min(lo, r.n);
    hi = std::max(hi, r.n);
  }
  if (hi < 8 * lo) throw ConfigError("fit_loglog_slope: rows must span at least 8x in n");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double m = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double lx = std::log(static_cast<double>(r.n));
    const double ly = std::log(r.median_s);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

std::vector<BenchRow> rows_for(std::span<const BenchRow> rows, Op op) {
  std::vector<BenchRow> out;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(out),
               [op](const BenchRow& r) { return r.op == op; });
  return out;
}

std::string emit_csv(std::span<const BenchRow> rows) {
  std::vector<BenchRow> sorted(rows.begin(), rows.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::pair(static_cast<int>(a.op), a.n) < std::pair(static_cast<int>(b.op), b.n);
  });
  std::ostringstream os;
  os.precision(17);
  os << "n,op,reps,median_s,mean_s,stddev_s\n";
  for (const auto& r : sorted) {
    os << r.n << ',' << op_name(r.op) << ',' << r.reps << ',' << r.median_s << ',' << r.mean_s << ','
       << r.stddev_s << '\n';
  }
  return os.str();
}

namespace {
template <typename T>
T parse_field(std::string_view s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bench csv: bad field '" + std::string(s) + "'");
  }
  return v;
}
}  // namespace

std::vector<BenchRow> parse_csv(std::string_view text) {
  std::vector<BenchRow> rows;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "n,op,reps,median_s,mean_s,stddev_s") throw ConfigError("bench csv: bad header");
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t p = 0;
    while (true) {
      const std::size_t c = line.find(',', p);
      f.push_back(line.substr(p, c == std::string_view::npos ? std::string_view::npos : c - p));
      if (c == std::string_view::npos) break;
      p = c + 1;
    }
    if (f.size() != 6) throw ConfigError("bench csv: expected 6 fields");
    BenchRow r;
    r.n = parse_field<std::size_t>(f[0]);
    r.op = parse_op(f[1]);
    r.reps = parse_field<std::size_t>(f[2]);
    r.median_s = parse_field<double>(f[3]);
    r.mean_s = parse_field<double>(f[4]);
    r.stddev_s = parse_field<double>(f[5]);
    rows.push_back(r);
  }
  if (!header_seen) throw ConfigError("bench csv: missing header");
  return rows;
}

std::string machine_comment() {
  std::string cpu = "unknown";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  std::ostringstream os;
  os << "# cpu: " << cpu << "\n# hardware_threads: " << std::thread::hardware_concurrency()
     << "\n# eigen: " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
     << EIGEN_MINOR_VERSION << "\n";
  return os.str();
}

}  // namespace sbi::bench

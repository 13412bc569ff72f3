#include "sbi/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sbi/attacks.hpp"
#include "sbi/bench.hpp"
#include "sbi/errors.hpp"
#include "sbi/scheme.hpp"
#include "sbi/store.hpp"

namespace sbi::cli {
namespace {

namespace fs = std::filesystem;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t p = 0;
  while (true) {
    const std::size_t c = line.find(',', p);
    out.push_back(trim(line.substr(p, c == std::string_view::npos ? std::string_view::npos : c - p)));
    if (c == std::string_view::npos) break;
    p = c + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DimensionError(where + ": cannot parse '" + std::string(s) + "'");
  }
  return v;
}

// CSV with header id,f1,..,fn.
std::vector<PlainTemplate> read_templates(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DimensionError(path.string() + ": empty template file");
  const auto header = split_commas(line);
  if (header.size() != n + 1 || header[0] != "id") {
    throw DimensionError(path.string() + ": header must be id,f1..f" + std::to_string(n));
  }
  for (std::size_t i = 1; i <= n; ++i) {
    if (header[i] != "f" + std::to_string(i)) {
      throw DimensionError(path.string() + ": header column " + std::to_string(i + 1) + " must be f" +
                           std::to_string(i));
    }
  }
  std::vector<PlainTemplate> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_commas(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != n + 1) throw DimensionError(where + ": expected " + std::to_string(n + 1) + " fields");
    PlainTemplate t;
    t.id = parse_number<std::uint64_t>(f[0], where);
    t.features.reserve(n);
    for (std::size_t i = 1; i <= n; ++i) t.features.push_back(parse_number<double>(f[i], where));
    out.push_back(std::move(t));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw FormatError(FormatError::Kind::kIo, "cannot write " + path);
  f << text;
}

struct KeygenArgs {
  std::size_t n = 0;
  double theta = 0.0;
  std::uint64_t seed = 1;
  std::string out;
  bool test_mode = false;
  double min_rcond = kDefaultMinRcond;
};

int run_keygen(const KeygenArgs& a, std::ostream& out) {
  const SystemParams params = setup(a.n, a.theta);
  Rng rng(a.seed);
  const SecretKey key = keygen(params, rng, a.min_rcond);
  store::write_key(a.out, params, key, a.test_mode ? store::kFlagTestMode : 0);
  out << "wrote key n=" << params.n << " ext_dim=" << params.ext_dim() << " to " << a.out << "\n";
  return kExitOk;
}

struct EnrollArgs {
  std::string key, db, in;
  std::uint64_t seed = 1;
};

int run_enroll(const EnrollArgs& a, std::ostream& out) {
  const store::KeyFile kf = store::read_key(a.key);
  const auto templates = read_templates(a.in, kf.params.n);
  if (!fs::exists(a.db)) {
    store::create_database(a.db, kf.params.n, kf.flags);
  } else {
    const auto h = store::read_database_header(a.db);
    if (h.n != kf.params.n) {
      throw FormatError(FormatError::Kind::kDimension,
                        "database n=" + std::to_string(h.n) + " but key n=" + std::to_string(kf.params.n));
    }
  }
  Rng rng(a.seed);
  for (const auto& t : templates) {
    store::append_record(a.db, transform(kf.key, kf.params, t, rng));
  }
  out << "enrolled " << templates.size() << " templates into " << a.db << "\n";
  return kExitOk;
}

struct TokenizeArgs {
  std::string key, in, out;
  std::optional<std::uint64_t> id;
  std::uint64_t seed = 1;
};

int run_tokenize(const TokenizeArgs& a, std::ostream& out) {
  const store::KeyFile kf = store::read_key(a.key);
  const auto rows = read_templates(a.in, kf.params.n);
  const PlainTemplate* query = nullptr;
  if (a.id) {
    for (const auto& r : rows) {
      if (r.id == *a.id) query = &r;
    }
    if (query == nullptr) throw DimensionError("no row with id " + std::to_string(*a.id) + " in " + a.in);
  } else {
    if (rows.size() != 1) throw ConfigError(a.in + " holds " + std::to_string(rows.size()) +
                                            " rows; pick one with --id");
    query = &rows.front();
  }
  Rng rng(a.seed);
  store::write_token(a.out, kf.params.n, token_gen(kf.key, kf.params, *query, rng), kf.flags);
  out << "wrote token for id " << query->id << " to " << a.out << "\n";
  return kExitOk;
}

struct IdentifyArgs {
  std::string db, token;
  bool strict = false;
  bool unsafe_debug = false;
  unsigned jobs = 1;
};

int run_identify(const IdentifyArgs& a, std::ostream& out, std::ostream& err) {
  store::DatabaseScanner scanner(a.db);
  const store::TokenFile tf = store::read_token(a.token, scanner.header().n);
  if (a.unsafe_debug) {
    const bool marked = (scanner.header().flags & store::kFlagTestMode) != 0 &&
                        (tf.flags & store::kFlagTestMode) != 0;
    if (!marked) {
      err << "error: --unsafe-debug needs a database and token produced from a --test-mode key\n";
      return kExitData;
    }
  }
  IdentifyOptions opts;
  opts.jobs = std::max(a.jobs, 1u);
  opts.mode = a.unsafe_debug ? EvalMode::kDebug : EvalMode::kProduction;

  const PreparedToken prepared(tf.token);
  const std::size_t batch = 16 * static_cast<std::size_t>(opts.jobs);
  std::vector<EncryptedTemplate> buf;
  std::size_t matches = 0;
  auto flush = [&] {
    if (a.unsafe_debug) {
      // Every record, not just matches.
      for (const auto& ct : buf) {
        const MatchResult r = evaluate(ct, prepared, EvalMode::kDebug);
        out << r.id << ',' << (r.lambda ? 1 : 0) << ',' << *r.raw_value << '\n';
        matches += r.lambda ? 1 : 0;
      }
    } else {
      for (const auto& r : identify(buf, prepared, opts)) {
        out << r.id << '\n';
        ++matches;
      }
    }
    buf.clear();
  };
  if (a.unsafe_debug) out << std::setprecision(17) << "id,lambda,value\n";
  while (auto rec = scanner.next()) {
    buf.push_back(std::move(*rec));
    if (buf.size() == batch) flush();
  }
  flush();
  return (a.strict && matches == 0) ? kExitNoMatch : kExitOk;
}

struct AttackEnrollArgs {
  std::size_t n = 8;
  std::size_t trials = 100;
  double delta = 1.0;
  double theta = 50.0;
  bool disable_type1 = false;
  std::uint64_t seed = 1;
  std::string csv;
};

int run_attack_enroll(const AttackEnrollArgs& a, std::ostream& out) {
  if (a.trials == 0) throw ConfigError("--trials must be positive");
  const SystemParams params = setup(a.n, a.theta);
  RandomnessConfig cfg;
  cfg.type1_enabled = !a.disable_type1;
  Rng rng(a.seed);
  std::vector<attacks::AttackTranscript> runs;
  double worst = 0.0, mean_rel = 0.0;
  for (std::size_t t = 0; t < a.trials; ++t) {
    PlainTemplate y;
    y.features.resize(a.n);
    for (auto& f : y.features) f = rng.uniform(0.0, 255.0);
    attacks::SimulatedDeployment dep(params, cfg, y, rng.next_u64());
    auto tr = attacks::enrollment_attack(dep, a.delta);
    tr.query_truth = y;
    worst = std::max(worst, attacks::max_scaled_error(tr.recovered, y.features));
    mean_rel += attacks::relative_error(tr.recovered, y.features);
    runs.push_back(std::move(tr));
  }
  mean_rel /= static_cast<double>(a.trials);
  out << "enrollment attack: n=" << a.n << " trials=" << a.trials << " delta=" << a.delta
      << " type1=" << (a.disable_type1 ? "off" : "on") << "\n"
      << "max scaled error: " << worst << "\n"
      << "mean relative error: " << mean_rel << "\n"
      << "verdict: " << (mean_rel < 1e-6 ? "query recovered" : "recovery failed") << "\n";
  if (!a.csv.empty()) write_text(a.csv, attacks::enrollment_report_csv(runs), out);
  return kExitOk;
}

struct AttackDistinguishArgs {
  std::size_t n = 16;
  std::size_t trials = 2000;
  std::size_t learn = 4;
  bool ablate = false;
  std::string candidates = "auto";
  double factor = 1000.0;
  std::uint64_t seed = 1;
  std::string csv;
};

int run_attack_distinguish(const AttackDistinguishArgs& a, std::ostream& out) {
  const SystemParams params = setup(a.n, 100.0);
  RandomnessConfig cfg;
  if (a.ablate) {
    cfg.type1_enabled = false;
    cfg.type3_enabled = false;
  }
  std::string kind = a.candidates;
  if (kind == "auto") kind = a.ablate ? "scaled" : "uniform";
  attacks::CandidateSource source;
  if (kind == "uniform") {
    source = attacks::uniform_candidates(a.n);
  } else if (kind == "scaled") {
    source = attacks::scaled_candidates(a.n, a.factor);
  } else {
    throw ConfigError("--candidates must be uniform, scaled or auto");
  }
  attacks::GameOptions opts;
  opts.trials = a.trials;
  opts.learning_tokens = a.learn;

  out << "distinguishing game: n=" << a.n << " trials=" << a.trials << " learn=" << a.learn
      << " scheme=" << (a.ablate ? "type1+type3 disabled" : "full") << " candidates=" << kind << "\n";
  out << "distinguisher,success_rate,ci95\n";
  std::string csv;
  Rng rng(a.seed);
  for (auto& d : attacks::default_battery()) {
    attacks::OwnerTokenOracle oracle(params, cfg, rng.next_u64());
    Rng game_rng = rng.split();
    const auto res = attacks::distinguish_game(oracle, *d, source, opts, game_rng);
    out << d->name() << ',' << res.success_rate << ',' << res.ci95_halfwidth << "\n";
    if (!a.csv.empty()) csv += "# " + d->name() + "\n" + attacks::game_report_csv(res);
  }
  if (!a.csv.empty()) write_text(a.csv, csv, out);
  return kExitOk;
}

struct BenchArgs {
  std::vector<std::size_t> ns{100, 200, 400, 800, 1600};
  std::size_t reps = 5;
  std::vector<std::string> ops{"transform", "token_gen", "evaluate", "identify"};
  std::size_t identify_records = 4;
  unsigned jobs = 1;
  bool warm = false;
  std::uint64_t seed = 1;
  std::string out;
};

int run_bench(const BenchArgs& a, std::ostream& out) {
  bench::SweepOptions opts;
  opts.ops.clear();
  for (const auto& o : a.ops) opts.ops.push_back(bench::parse_op(o));
  opts.reps = a.reps;
  opts.identify_records = a.identify_records;
  opts.identify_jobs = a.jobs;
  opts.cold_cache = !a.warm;
  Rng rng(a.seed);
  const auto rows = bench::sweep(a.ns, opts, rng);
  std::ostringstream text;
  text << bench::machine_comment() << bench::emit_csv(rows);
  for (auto op : opts.ops) {
    const auto sub = bench::rows_for(rows, op);
    try {
      text << "# slope " << bench::op_name(op) << ": " << bench::fit_loglog_slope(sub) << "\n";
    } catch (const ConfigError&) {
      // Too few points for a fit.
    }
  }
  write_text(a.out, text.str(), out);
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fixed-radius biometric identification over masked templates"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  KeygenArgs kg;
  auto* c_keygen = app.add_subcommand("keygen", "Generate a secret key");
  c_keygen->add_option("--n", kg.n, "Template dimension")->required();
  c_keygen->add_option("--theta", kg.theta, "Match radius")->required();
  c_keygen->add_option("--seed", kg.seed, "Random seed");
  c_keygen->add_option("--out", kg.out, "Key file to write")->required();
  c_keygen->add_option("--min-rcond", kg.min_rcond, "Conditioning floor for M1, M2");
  c_keygen->add_flag("--test-mode", kg.test_mode, "Mark the key (and derived files) as test data");

  EnrollArgs en;
  auto* c_enroll = app.add_subcommand("enroll", "Transform CSV templates and append them to a database");
  c_enroll->add_option("--key", en.key)->required();
  c_enroll->add_option("--db", en.db)->required();
  c_enroll->add_option("--in", en.in, "CSV with header id,f1..fn")->required();
  c_enroll->add_option("--seed", en.seed);

  TokenizeArgs tk;
  auto* c_tok = app.add_subcommand("tokenize", "Create a query token from a CSV row");
  c_tok->add_option("--key", tk.key)->required();
  c_tok->add_option("--in", tk.in, "CSV with header id,f1..fn")->required();
  c_tok->add_option("--out", tk.out)->required();
  c_tok->add_option("--id", tk.id, "Row to use when the CSV holds several");
  c_tok->add_option("--seed", tk.seed);

  IdentifyArgs id;
  auto* c_id = app.add_subcommand("identify", "Print ids of records within the radius of a token");
  c_id->add_option("--db", id.db)->required();
  c_id->add_option("--token", id.token)->required();
  c_id->add_option("--jobs", id.jobs, "Parallel scan workers");
  c_id->add_flag("--strict", id.strict, "Exit 3 when nothing matches");
  c_id->add_flag("--unsafe-debug", id.unsafe_debug, "Print raw evaluation values (test-mode files only)");
  std::uint64_t unused_seed = 0;
  c_id->add_option("--seed", unused_seed, "Accepted for uniformity; identify draws no randomness");

  AttackEnrollArgs ae;
  auto* c_ae = app.add_subcommand("attack-enroll", "Run the enrollment attack against a simulated deployment");
  c_ae->add_option("--n", ae.n);
  c_ae->add_option("--trials", ae.trials);
  c_ae->add_option("--delta", ae.delta);
  c_ae->add_option("--theta", ae.theta);
  c_ae->add_flag("--disable-type1", ae.disable_type1, "Ablate the result-disguising scalars");
  c_ae->add_option("--seed", ae.seed);
  c_ae->add_option("--csv", ae.csv, "Per-coordinate report");

  AttackDistinguishArgs ad;
  auto* c_ad = app.add_subcommand("attack-distinguish", "Run the token distinguishability game");
  c_ad->add_option("--n", ad.n);
  c_ad->add_option("--trials", ad.trials);
  c_ad->add_option("--learn", ad.learn, "Chosen-plaintext tokens per candidate");
  c_ad->add_flag("--ablate", ad.ablate, "Disable type 1 and type 3 randomness");
  c_ad->add_option("--candidates", ad.candidates, "uniform | scaled | auto");
  c_ad->add_option("--factor", ad.factor, "Scale between scaled candidates");
  c_ad->add_option("--seed", ad.seed);
  c_ad->add_option("--csv", ad.csv, "Per-trial report");

  BenchArgs bn;
  auto* c_bench = app.add_subcommand("bench", "Time the scheme across dimensions and print CSV");
  c_bench->add_option("--ns", bn.ns, "Dimensions")->delimiter(',');
  c_bench->add_option("--reps", bn.reps);
  c_bench->add_option("--ops", bn.ops)->delimiter(',');
  c_bench->add_option("--identify-records", bn.identify_records);
  c_bench->add_option("--jobs", bn.jobs, "Workers for the identify measurement");
  c_bench->add_flag("--warm", bn.warm, "Skip cache eviction between reps");
  c_bench->add_option("--seed", bn.seed);
  c_bench->add_option("--out", bn.out, "CSV destination (default stdout)");

  std::vector<std::string> files;
  auto* c_inspect = app.add_subcommand("inspect", "Print file headers");
  c_inspect->add_option("files", files)->required();

  std::vector<char*> argv;
  std::vector<std::string> owned = args.empty() ? std::vector<std::string>{"sbi"} : args;
  for (auto& s : owned) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (c_keygen->parsed()) return run_keygen(kg, out);
    if (c_enroll->parsed()) return run_enroll(en, out);
    if (c_tok->parsed()) return run_tokenize(tk, out);
    if (c_id->parsed()) return run_identify(id, out, err);
    if (c_ae->parsed()) return run_attack_enroll(ae, out);
    if (c_ad->parsed()) return run_attack_distinguish(ad, out);
    if (c_bench->parsed()) return run_bench(bn, out);
    if (c_inspect->parsed()) {
      for (const auto& f : files) out << "file: " << f << "\n" << store::describe(f);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace sbi::cli

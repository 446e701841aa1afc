#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "algorithms.hpp"
#include "compressor.hpp"
#include "data_io.hpp"
#include "problem.hpp"
#include "theory.hpp"

// Configuration loading, output writing and the command drivers behind the
// command-line tool. Everything here is deterministic: rerunning a command on
// the same inputs produces byte-identical files.

namespace fedshuffle {

using json = nlohmann::ordered_json;

/// Rejected configuration; the message names the offending field by path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<std::string_view> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed)
      if (k == it.key()) known = true;
    if (!known) throw ConfigError("unknown key: " + path + "." + it.key());
  }
}

inline const json& require_member(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError("missing required key: " + path + "." + key);
  return obj.at(key);
}

inline double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + " must be a number");
  return v.get<double>();
}

inline int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
  return v.get<int>();
}

inline std::uint64_t as_seed(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const long long s = v.get<long long>();
    if (s < 0) throw ConfigError(path + " must be a nonnegative integer");
    return static_cast<std::uint64_t>(s);
  }
  throw ConfigError(path + " must be a nonnegative integer");
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + " must be a string");
  return v.get<std::string>();
}

template <typename T, typename Fn>
std::vector<T> scalar_or_list(const json& v, const std::string& path, bool allow_lists, Fn&& one) {
  if (v.is_array()) {
    if (!allow_lists) throw ConfigError(path + ": lists are only valid in sweep mode");
    if (v.empty()) throw ConfigError(path + ": list must not be empty");
    std::vector<T> out;
    for (const auto& e : v) out.push_back(one(e, path));
    return out;
  }
  return {one(v, path)};
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

inline std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

struct ProblemSpec {
  enum class Kind { synthetic, libsvm };
  Kind kind = Kind::synthetic;
  int clients = 1;
  std::optional<double> lambda;  // default: 1/n
  std::uint64_t seed = 0;
  // synthetic
  int components = 1;
  int dim = 1;
  double noise = 0.0;
  double heterogeneity = 0.0;
  // libsvm
  std::string path;
  std::optional<int> dim_override;
  PartitionScheme scheme = PartitionScheme::iid;
};

struct RunTemplate {
  std::vector<Algorithm> algorithms;
  ShuffleMode shuffle = ShuffleMode::random_reshuffle;
  std::vector<double> gammas;
  double alpha = 1.0;
  double eta = 1.0;
  int epochs = 0;
  CompressorKind comp_kind = CompressorKind::identity;
  std::vector<int> ks;  // empty for identity
  std::uint64_t seed = 0;
  std::optional<Vec> x0;
};

struct HarnessConfig {
  ProblemSpec problem;
  RunTemplate run;
  int repeats = 1;
  int threads = 1;
  std::string output_prefix = "fedshuffle_out";
};

inline ProblemSpec parse_problem_spec(const json& j) {
  if (!j.is_object()) throw ConfigError("problem must be an object");
  ProblemSpec spec;
  const std::string type = detail::as_string(detail::require_member(j, "problem", "type"),
                                             "problem.type");
  if (type == "synthetic") {
    spec.kind = ProblemSpec::Kind::synthetic;
    detail::check_keys(j, "problem", {"type", "clients", "components", "dim", "noise",
                                      "heterogeneity", "lambda", "seed"});
    spec.clients = detail::as_int(detail::require_member(j, "problem", "clients"),
                                  "problem.clients");
    spec.components = detail::as_int(detail::require_member(j, "problem", "components"),
                                     "problem.components");
    spec.dim = detail::as_int(detail::require_member(j, "problem", "dim"), "problem.dim");
    if (j.contains("noise")) spec.noise = detail::as_number(j.at("noise"), "problem.noise");
    if (j.contains("heterogeneity"))
      spec.heterogeneity = detail::as_number(j.at("heterogeneity"), "problem.heterogeneity");
  } else if (type == "libsvm") {
    spec.kind = ProblemSpec::Kind::libsvm;
    detail::check_keys(j, "problem", {"type", "path", "clients", "scheme", "lambda", "seed",
                                      "dim"});
    spec.path = detail::as_string(detail::require_member(j, "problem", "path"), "problem.path");
    spec.clients = detail::as_int(detail::require_member(j, "problem", "clients"),
                                  "problem.clients");
    if (j.contains("dim")) spec.dim_override = detail::as_int(j.at("dim"), "problem.dim");
    if (j.contains("scheme")) {
      const auto s = scheme_from_name(detail::as_string(j.at("scheme"), "problem.scheme"));
      if (!s) throw ConfigError("problem.scheme must be \"iid\" or \"sorted_by_target\"");
      spec.scheme = *s;
    }
  } else {
    throw ConfigError("problem.type must be \"synthetic\" or \"libsvm\"");
  }
  if (j.contains("lambda")) spec.lambda = detail::as_number(j.at("lambda"), "problem.lambda");
  if (j.contains("seed")) spec.seed = detail::as_seed(j.at("seed"), "problem.seed");
  return spec;
}

inline RunTemplate parse_run_template(const json& j, bool allow_lists) {
  if (!j.is_object()) throw ConfigError("run must be an object");
  detail::check_keys(j, "run", {"algorithm", "shuffle", "gamma", "alpha", "eta", "epochs",
                                "compressor", "seed", "x0"});
  RunTemplate rt;
  rt.algorithms = detail::scalar_or_list<Algorithm>(
      detail::require_member(j, "run", "algorithm"), "run.algorithm", allow_lists,
      [](const json& v, const std::string& path) {
        const auto a = algorithm_from_name(detail::as_string(v, path));
        if (!a) throw ConfigError(path + ": unknown algorithm \"" + v.get<std::string>() + "\"");
        return *a;
      });
  rt.gammas = detail::scalar_or_list<double>(detail::require_member(j, "run", "gamma"),
                                             "run.gamma", allow_lists, detail::as_number);
  rt.epochs = detail::as_int(detail::require_member(j, "run", "epochs"), "run.epochs");
  if (j.contains("shuffle")) {
    const std::string s = detail::as_string(j.at("shuffle"), "run.shuffle");
    if (s == "random_reshuffle")
      rt.shuffle = ShuffleMode::random_reshuffle;
    else if (s == "shuffle_once")
      rt.shuffle = ShuffleMode::shuffle_once;
    else
      throw ConfigError("run.shuffle must be \"random_reshuffle\" or \"shuffle_once\"");
  }
  if (j.contains("alpha")) rt.alpha = detail::as_number(j.at("alpha"), "run.alpha");
  if (j.contains("eta")) rt.eta = detail::as_number(j.at("eta"), "run.eta");
  if (j.contains("seed")) rt.seed = detail::as_seed(j.at("seed"), "run.seed");
  if (j.contains("compressor")) {
    const json& c = j.at("compressor");
    if (!c.is_object()) throw ConfigError("run.compressor must be an object");
    detail::check_keys(c, "run.compressor", {"kind", "k"});
    const std::string kind = detail::as_string(detail::require_member(c, "run.compressor", "kind"),
                                               "run.compressor.kind");
    if (kind == "identity") {
      rt.comp_kind = CompressorKind::identity;
      if (c.contains("k")) throw ConfigError("run.compressor.k is only valid for rand_k");
    } else if (kind == "rand_k") {
      rt.comp_kind = CompressorKind::rand_k;
      rt.ks = detail::scalar_or_list<int>(detail::require_member(c, "run.compressor", "k"),
                                          "run.compressor.k", allow_lists, detail::as_int);
    } else {
      throw ConfigError("run.compressor.kind must be \"identity\" or \"rand_k\"");
    }
  }
  if (j.contains("x0")) {
    const json& v = j.at("x0");
    if (!v.is_array() || v.empty()) throw ConfigError("run.x0 must be a nonempty array of numbers");
    Vec x0(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      x0[static_cast<Eigen::Index>(i)] = detail::as_number(v.at(i), "run.x0");
    rt.x0 = std::move(x0);
  }
  return rt;
}

inline HarnessConfig parse_config(const json& j, bool allow_lists) {
  if (!j.is_object()) throw ConfigError("configuration root must be an object");
  detail::check_keys(j, "config", {"problem", "run", "repeats", "threads", "output_prefix"});
  HarnessConfig hc;
  hc.problem = parse_problem_spec(detail::require_member(j, "config", "problem"));
  hc.run = parse_run_template(detail::require_member(j, "config", "run"), allow_lists);
  if (j.contains("repeats")) {
    hc.repeats = detail::as_int(j.at("repeats"), "repeats");
    if (hc.repeats < 1) throw ConfigError("repeats must be at least 1");
  }
  if (j.contains("threads")) {
    hc.threads = detail::as_int(j.at("threads"), "threads");
    if (hc.threads < 1) throw ConfigError("threads must be at least 1");
  }
  if (j.contains("output_prefix"))
    hc.output_prefix = detail::as_string(j.at("output_prefix"), "output_prefix");
  return hc;
}

struct BuiltProblem {
  FederatedProblem problem;
  int dropped_rows = 0;
};

inline BuiltProblem build_problem(const ProblemSpec& spec) {
  if (spec.kind == ProblemSpec::Kind::synthetic) {
    const double lambda = spec.lambda ? *spec.lambda : 1.0 / spec.components;
    return {generate_synthetic(spec.seed, spec.clients, spec.components, spec.dim, spec.noise,
                               spec.heterogeneity, lambda),
            0};
  }
  const RawDataset raw = load_libsvm_file(spec.path, spec.dim_override);
  auto res = partition(raw, spec.clients, spec.scheme, spec.seed, spec.lambda);
  return {std::move(res.problem), res.dropped_rows};
}

/// One fully resolved point of the (algorithm, gamma, k) grid.
struct RunVariant {
  int index = 0;
  Algorithm algorithm = Algorithm::fed_crr;
  double gamma = 0.0;
  int k = 0;  // 0 under the identity compressor
};

/// Cartesian expansion, algorithm-major, k fastest.
inline std::vector<RunVariant> expand_variants(const RunTemplate& rt) {
  const std::vector<int> ks = rt.ks.empty() ? std::vector<int>{0} : rt.ks;
  std::vector<RunVariant> out;
  int index = 0;
  for (const auto alg : rt.algorithms)
    for (const double gamma : rt.gammas)
      for (const int k : ks) out.push_back({index++, alg, gamma, k});
  return out;
}

inline Compressor variant_compressor(const RunTemplate& rt, const RunVariant& v, int dim) {
  return rt.comp_kind == CompressorKind::identity ? Compressor::identity(dim)
                                                  : Compressor::rand_k(v.k, dim);
}

inline RunConfig variant_run_config(const HarnessConfig& hc, const RunVariant& v,
                                    std::uint64_t seed) {
  RunConfig rc;
  rc.algorithm = v.algorithm;
  rc.shuffle = hc.run.shuffle;
  rc.gamma = v.gamma;
  rc.alpha = hc.run.alpha;
  rc.eta = hc.run.eta;
  rc.epochs = hc.run.epochs;
  rc.seed = seed;
  rc.threads = hc.threads;
  rc.x0 = hc.run.x0;
  return rc;
}

inline void write_trace_csv(std::ostream& os,
                            const std::vector<std::pair<std::uint64_t, Trace>>& runs) {
  os << "# fedshuffle-trace v1, uplink-only bits, 32-bit indices\n";
  os << "epoch,seed,cum_bits,sq_dist,f_gap,lyapunov\n";
  for (const auto& [seed, trace] : runs)
    for (const auto& r : trace.records) {
      os << r.epoch << ',' << seed << ',' << r.cum_bits << ',' << detail::g17(r.sq_dist) << ','
         << detail::g17(r.f_gap) << ',';
      if (r.lyapunov) os << detail::g17(*r.lyapunov);
      os << '\n';
    }
}

inline json condition_to_json(const ConditionCheck& c) {
  return json{{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"holds", c.holds}};
}

inline json theory_to_json(const TheoryReport& r) {
  json out;
  out["constants"] = json{{"L", r.constants.L},
                          {"L_max", r.constants.L_max},
                          {"mu", r.constants.mu},
                          {"mu_per_client", r.constants.mu_per_client},
                          {"kappa", r.constants.kappa}};
  out["params"] = json{{"gamma", r.params.gamma},
                       {"alpha", r.params.alpha},
                       {"eta", r.params.eta},
                       {"omega", r.params.omega}};
  out["x_star"] = std::vector<double>(r.x_star.data(), r.x_star.data() + r.x_star.size());
  out["grad_sq_norms_at_opt"] = r.grad_norms;
  out["sigma_star_sq_per_client"] = r.sigma_star_m;
  out["sigma_star_sq_pooled"] = r.sigma_star_pooled;
  out["shuffling_radius_sq"] =
      json{{"exact", r.sigma_rad_exact ? json(*r.sigma_rad_exact) : json(nullptr)},
           {"bound_lifted", r.sigma_rad_bound},
           {"bound_single", r.sigma_rad_bound_single}};
  out["neighborhoods"] = json{{"thm2", r.thm2_neighborhood},
                              {"thm2_no_factor", r.thm2_neighborhood_no_factor},
                              {"thm3", r.thm3_neighborhood},
                              {"thm4", r.thm4_neighborhood}};
  out["delta_avg"] = r.delta_avg;
  out["delta_prime_avg"] = r.delta_prime_avg;
  json validity = json::array();
  for (const auto* c : r.validity.all()) validity.push_back(condition_to_json(*c));
  out["validity"] = validity;
  return out;
}

/// The conditions a given scheme's convergence statement actually assumes.
inline std::vector<const ConditionCheck*> relevant_conditions(const ValidityReport& v,
                                                              Algorithm a) {
  switch (a) {
    case Algorithm::fed_rr:
    case Algorithm::fed_crr:
      return {&v.thm2_gamma, &v.thm2_omega};
    case Algorithm::fed_crr_vr:
      return {&v.thm3_gamma, &v.thm3_alpha, &v.thm3_eta};
    case Algorithm::fed_crr_vr2:
      return {&v.thm4_gamma, &v.thm4_alpha, &v.thm4_eta, &v.thm4_window, &v.lemma4_gamma,
              &v.lemma4_n_big, &v.lemma4_delta_window, &v.lemma4_big_data};
  }
  return {};
}

inline void warn_conditions(std::ostream& err, const ValidityReport& v, Algorithm a) {
  char buf[128];
  for (const auto* c : relevant_conditions(v, a))
    if (!c->holds) {
      std::snprintf(buf, sizeof buf, "warning: condition %s fails (lhs=%.6g, rhs=%.6g)\n",
                    c->name, c->lhs, c->rhs);
      err << buf;
    }
}

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_prefix;
  std::optional<int> threads;
  bool quiet = false;
};

namespace detail {

inline HarnessConfig load_and_override(const CliOptions& opt, bool allow_lists,
                                       std::string* raw_text) {
  const std::string text = read_file(opt.config_path);
  if (raw_text) *raw_text = text;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  HarnessConfig hc = parse_config(j, allow_lists);
  if (opt.seed) hc.run.seed = *opt.seed;
  if (opt.output_prefix) hc.output_prefix = *opt.output_prefix;
  if (opt.threads) {
    if (*opt.threads < 1) throw ConfigError("threads must be at least 1");
    hc.threads = *opt.threads;
  }
  return hc;
}

inline void warn_dropped(std::ostream& err, const BuiltProblem& built, const HarnessConfig& hc,
                         bool quiet) {
  if (built.dropped_rows > 0 && !quiet)
    err << "warning: dropped " << built.dropped_rows << " rows to split evenly across "
        << hc.problem.clients << " clients\n";
}

// Executes one variant (all repeats), appends output files, returns true if
// any repeat diverged.
inline bool execute_variant(const HarnessConfig& hc, const FederatedProblem& problem,
                            const RunVariant& v, const std::string& trace_path,
                            const std::string& theory_path, std::ostream& err, bool quiet) {
  const Compressor comp = variant_compressor(hc.run, v, problem.dim());
  const MethodParams mp{v.gamma, hc.run.alpha, hc.run.eta, comp.omega()};
  const TheoryReport report = make_theory_report(problem, mp);
  if (!quiet) warn_conditions(err, report.validity, v.algorithm);

  bool diverged = false;
  std::vector<std::pair<std::uint64_t, Trace>> runs;
  runs.reserve(hc.repeats);
  for (int r = 0; r < hc.repeats; ++r) {
    const std::uint64_t seed = hc.run.seed + static_cast<std::uint64_t>(r);
    Trace tr = run_federated(problem, comp, variant_run_config(hc, v, seed));
    if (tr.terminated_early) {
      err << "divergence: seed " << seed << ": " << tr.reason << "\n";
      diverged = true;
    }
    runs.emplace_back(seed, std::move(tr));
  }

  std::ostringstream os;
  write_trace_csv(os, runs);
  write_file(trace_path, os.str());
  write_file(theory_path, theory_to_json(report).dump(2) + "\n");
  return diverged;
}

}  // namespace detail

inline int command_run(const CliOptions& opt, std::ostream& err) {
  try {
    std::string raw;
    const HarnessConfig hc = detail::load_and_override(opt, /*allow_lists=*/false, &raw);
    const BuiltProblem built = build_problem(hc.problem);
    detail::warn_dropped(err, built, hc, opt.quiet);
    const RunVariant v = expand_variants(hc.run).front();
    const bool diverged =
        detail::execute_variant(hc, built.problem, v, hc.output_prefix + "_trace.csv",
                                hc.output_prefix + "_theory.json", err, opt.quiet);
    detail::write_file(hc.output_prefix + "_config.json", raw);
    return diverged ? 3 : 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int command_sweep(const CliOptions& opt, std::ostream& err) {
  try {
    std::string raw;
    const HarnessConfig hc = detail::load_and_override(opt, /*allow_lists=*/true, &raw);
    const BuiltProblem built = build_problem(hc.problem);
    detail::warn_dropped(err, built, hc, opt.quiet);

    std::ostringstream manifest;
    manifest << "combo,algorithm,gamma,compressor,k,trace_file,theory_file\n";
    bool diverged = false;
    for (const RunVariant& v : expand_variants(hc.run)) {
      const std::string stem = hc.output_prefix + "_c" + std::to_string(v.index);
      const std::string trace_path = stem + "_trace.csv";
      const std::string theory_path = stem + "_theory.json";
      if (detail::execute_variant(hc, built.problem, v, trace_path, theory_path, err, opt.quiet))
        diverged = true;
      manifest << v.index << ',' << algorithm_name(v.algorithm) << ',' << detail::g17(v.gamma)
               << ',' << (hc.run.comp_kind == CompressorKind::identity ? "identity" : "rand_k")
               << ',';
      if (hc.run.comp_kind == CompressorKind::rand_k) manifest << v.k;
      manifest << ',' << trace_path << ',' << theory_path << '\n';
    }
    detail::write_file(hc.output_prefix + "_manifest.csv", manifest.str());
    detail::write_file(hc.output_prefix + "_config.json", raw);
    return diverged ? 3 : 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int command_theory(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const HarnessConfig hc = detail::load_and_override(opt, /*allow_lists=*/false, nullptr);
    const BuiltProblem built = build_problem(hc.problem);
    detail::warn_dropped(err, built, hc, opt.quiet);
    const RunVariant v = expand_variants(hc.run).front();
    const Compressor comp = variant_compressor(hc.run, v, built.problem.dim());
    const MethodParams mp{v.gamma, hc.run.alpha, hc.run.eta, comp.omega()};

    json doc;
    doc["problem"] = json{{"clients", built.problem.num_clients()},
                          {"components", built.problem.components_per_client()},
                          {"dim", built.problem.dim()},
                          {"lambda", built.problem.lambda()},
                          {"dropped_rows", built.dropped_rows}};
    doc.update(theory_to_json(make_theory_report(built.problem, mp)));
    out << doc.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int command_parse_check(const std::string& input, std::optional<int> dim,
                               std::ostream& out, std::ostream& err) {
  try {
    const RawDataset data = load_libsvm_file(input, dim);
    out << "ok: " << data.features.rows() << " rows, " << data.features.cols() << " columns\n";
    return 0;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace fedshuffle

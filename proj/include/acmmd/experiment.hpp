#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "json.hpp"

#include "acmmd/dataset.hpp"
#include "acmmd/estimator.hpp"
#include "acmmd/hypothesis_test.hpp"
#include "acmmd/parallel.hpp"
#include "acmmd/reliability.hpp"
#include "acmmd/rng.hpp"
#include "acmmd/toy.hpp"

namespace acmmd {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using nlohmann::json;

enum class Mode { Estimate, Test, RelEstimate, RelTest, Sweep, Toy };

inline const char *to_string(Mode m) {
  switch (m) {
  case Mode::Estimate: return "estimate";
  case Mode::Test: return "test";
  case Mode::RelEstimate: return "rel-estimate";
  case Mode::RelTest: return "rel-test";
  case Mode::Sweep: return "sweep";
  case Mode::Toy: return "toy";
  }
  return "?";
}

inline Mode parse_mode(const std::string &s) {
  for (Mode m : {Mode::Estimate, Mode::Test, Mode::RelEstimate, Mode::RelTest, Mode::Sweep,
                 Mode::Toy}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mode: " + s);
}

struct SweepConfig {
  std::vector<std::size_t> n_values = {100, 1000};
  std::vector<double> delta_p_values = {0.0, 0.25};
  std::size_t n_seeds = 300;
  bool reliability = false;  // statistic "rel" instead of "acmmd"
};

struct ExperimentConfig {
  Mode mode = Mode::Test;
  std::optional<std::uint64_t> seed;
  std::string input;
  std::string out;          // empty or "-" for stdout
  std::string summary_out;  // sweep summary; defaults to <out>.summary.json
  std::optional<KernelSpec> kernel_x;
  std::optional<KernelSpec> kernel_y;
  std::optional<double> sigma_p;  // nullopt: median heuristic
  bool sigma_p_set = false;
  double alpha = 0.05;
  std::size_t bootstrap = 100;
  std::optional<std::size_t> inner_samples;
  std::optional<std::string> group_by;
  std::size_t n = 100;  // toy-generate size
  SweepConfig sweep;
  toy::Config toy = toy::default_config();
  unsigned threads = 0;
  bool record_timing = false;

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("a seed is required (--seed or \"seed\" in the config)");
    return *seed;
  }

  unsigned thread_count() const { return threads == 0 ? default_thread_count() : threads; }

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (bootstrap < 1) throw ConfigError("bootstrap count must be >= 1");
    if (inner_samples && *inner_samples < 2) throw ConfigError("inner samples must be >= 2");
    if (sigma_p && !(*sigma_p > 0)) throw ConfigError("sigma-p must be > 0");
    if (mode == Mode::Sweep) {
      if (sweep.n_values.empty()) throw ConfigError("sweep n_values must be non-empty");
      if (input.empty() && sweep.delta_p_values.empty()) {
        throw ConfigError("sweep delta_p_values must be non-empty");
      }
      if (sweep.n_seeds < 1) throw ConfigError("sweep n_seeds must be >= 1");
      for (auto nv : sweep.n_values) {
        if (nv < 2) throw ConfigError("sweep n_values must be >= 2");
      }
    }
    try {
      toy.validate();
      for (double dp : sweep.delta_p_values) {
        toy::Config c = toy;
        c.delta_p = dp;
        c.validate();
      }
      if (kernel_x) kernel_x->validate();
      if (kernel_y) kernel_y->validate();
    } catch (const std::invalid_argument &e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline KernelSpec parse_kernel_arg(const std::string &s) {
  try {
    return parse_kernel_spec(s);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
}

inline std::optional<double> parse_sigma_value(const json &v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "median") return std::nullopt;
    throw ConfigError("sigma_p must be a number or \"median\"");
  }
  if (!v.is_number()) throw ConfigError("sigma_p must be a number or \"median\"");
  return v.get<double>();
}

template <class T>
T get_as(const json &obj, const std::string &key) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception &) {
    throw ConfigError("config field \"" + key + "\" has the wrong type");
  }
}

inline void check_keys(const json &obj, std::initializer_list<const char *> allowed,
                       const std::string &where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto &[key, _] : obj.items()) {
    bool ok = false;
    for (const char *a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown config field \"" + where + key + "\"");
  }
}

inline toy::Prior parse_prior(const json &t) {
  try {
    if (t.contains("atoms")) {
      std::vector<toy::Atom> atoms;
      for (const auto &a : t.at("atoms")) {
        check_keys(a, {"p", "weight"}, "toy.atoms[].");
        atoms.push_back({get_as<double>(a, "p"), get_as<double>(a, "weight")});
      }
      return toy::Prior(std::move(atoms));
    }
    const json &g = t.at("grid");
    check_keys(g, {"lo", "hi", "m"}, "toy.grid.");
    return toy::Prior::uniform_grid(get_as<double>(g, "lo"), get_as<double>(g, "hi"),
                                    get_as<std::size_t>(g, "m"));
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
}

} // namespace detail

// Reads a config document. Unknown fields are errors.
inline ExperimentConfig parse_config(const json &doc) {
  using detail::get_as;
  detail::check_keys(doc,
                     {"mode", "seed", "input", "out", "summary_out", "kernel_x", "kernel_y",
                      "sigma_p", "alpha", "bootstrap", "inner_samples", "group_by", "n", "sweep",
                      "toy", "threads", "record_timing"},
                     "");
  ExperimentConfig c;
  if (doc.contains("mode")) c.mode = parse_mode(get_as<std::string>(doc, "mode"));
  if (doc.contains("seed")) c.seed = get_as<std::uint64_t>(doc, "seed");
  if (doc.contains("input")) c.input = get_as<std::string>(doc, "input");
  if (doc.contains("out")) c.out = get_as<std::string>(doc, "out");
  if (doc.contains("summary_out")) c.summary_out = get_as<std::string>(doc, "summary_out");
  if (doc.contains("kernel_x")) c.kernel_x = detail::parse_kernel_arg(get_as<std::string>(doc, "kernel_x"));
  if (doc.contains("kernel_y")) c.kernel_y = detail::parse_kernel_arg(get_as<std::string>(doc, "kernel_y"));
  if (doc.contains("sigma_p")) {
    c.sigma_p = detail::parse_sigma_value(doc.at("sigma_p"));
    c.sigma_p_set = true;
  }
  if (doc.contains("alpha")) c.alpha = get_as<double>(doc, "alpha");
  if (doc.contains("bootstrap")) c.bootstrap = get_as<std::size_t>(doc, "bootstrap");
  if (doc.contains("inner_samples")) c.inner_samples = get_as<std::size_t>(doc, "inner_samples");
  if (doc.contains("group_by")) c.group_by = get_as<std::string>(doc, "group_by");
  if (doc.contains("n")) c.n = get_as<std::size_t>(doc, "n");
  if (doc.contains("threads")) c.threads = get_as<unsigned>(doc, "threads");
  if (doc.contains("record_timing")) c.record_timing = get_as<bool>(doc, "record_timing");
  if (doc.contains("sweep")) {
    const json &s = doc.at("sweep");
    detail::check_keys(s, {"n_values", "delta_p_values", "n_seeds", "statistic"}, "sweep.");
    if (s.contains("n_values")) c.sweep.n_values = get_as<std::vector<std::size_t>>(s, "n_values");
    if (s.contains("delta_p_values")) {
      c.sweep.delta_p_values = get_as<std::vector<double>>(s, "delta_p_values");
    }
    if (s.contains("n_seeds")) c.sweep.n_seeds = get_as<std::size_t>(s, "n_seeds");
    if (s.contains("statistic")) {
      const auto stat = get_as<std::string>(s, "statistic");
      if (stat != "acmmd" && stat != "rel") {
        throw ConfigError("sweep statistic must be \"acmmd\" or \"rel\"");
      }
      c.sweep.reliability = stat == "rel";
    }
  }
  if (doc.contains("toy")) {
    const json &t = doc.at("toy");
    detail::check_keys(t, {"atoms", "grid", "lambda", "delta_p", "sigma", "kernel_x"}, "toy.");
    if (t.contains("atoms") || t.contains("grid")) c.toy.prior = detail::parse_prior(t);
    if (t.contains("lambda")) c.toy.lambda = get_as<double>(t, "lambda");
    if (t.contains("delta_p")) c.toy.delta_p = get_as<double>(t, "delta_p");
    if (t.contains("sigma")) c.toy.sigma = get_as<double>(t, "sigma");
    if (t.contains("kernel_x")) {
      c.toy.kx = detail::parse_kernel_arg(get_as<std::string>(t, "kernel_x"));
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  try {
    return parse_config(json::parse(in));
  } catch (const json::parse_error &e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

inline json toy_json(const toy::Config &t) {
  json atoms = json::array();
  for (const auto &a : t.prior.atoms()) atoms.push_back({{"p", a.p}, {"weight", a.weight}});
  return {{"atoms", atoms},
          {"lambda", t.lambda},
          {"delta_p", t.delta_p},
          {"sigma", t.sigma},
          {"kernel_x", to_string(t.kx)}};
}

// The configuration as a JSON document accepted by parse_config. The thread
// count is an execution detail and is left out so that outputs do not depend
// on it.
inline json config_json(const ExperimentConfig &c) {
  json j = json::object();
  j["mode"] = to_string(c.mode);
  if (c.seed) j["seed"] = *c.seed;
  if (!c.input.empty()) j["input"] = c.input;
  if (c.kernel_x) j["kernel_x"] = to_string(*c.kernel_x);
  if (c.kernel_y) j["kernel_y"] = to_string(*c.kernel_y);
  if (c.sigma_p_set) {
    if (c.sigma_p) {
      j["sigma_p"] = *c.sigma_p;
    } else {
      j["sigma_p"] = "median";
    }
  }
  j["alpha"] = c.alpha;
  j["bootstrap"] = c.bootstrap;
  if (c.inner_samples) j["inner_samples"] = *c.inner_samples;
  if (c.group_by) j["group_by"] = *c.group_by;
  if (c.mode == Mode::Sweep) {
    j["sweep"] = {{"n_values", c.sweep.n_values},
                  {"delta_p_values", c.sweep.delta_p_values},
                  {"n_seeds", c.sweep.n_seeds},
                  {"statistic", c.sweep.reliability ? "rel" : "acmmd"}};
  }
  if (c.mode == Mode::Toy || (c.mode == Mode::Sweep && c.input.empty())) {
    j["toy"] = toy_json(c.toy);
    if (c.mode == Mode::Toy) j["n"] = c.n;
  }
  j["record_timing"] = c.record_timing;
  return j;
}

inline json report_json(const TestReport &r) {
  json j = json::object();
  j["test"] = r.test;
  j["statistic"] = r.statistic;
  j["threshold"] = r.threshold;
  j["p_value"] = r.p_value;
  j["reject"] = r.reject;
  j["alpha"] = r.alpha;
  j["b"] = r.b;
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["kernel_x"] = r.kernel_x;
  j["kernel_y"] = r.kernel_y;
  if (r.r) j["r"] = *r.r;
  if (r.sigma_h_sq) j["sigma_h_sq"] = *r.sigma_h_sq;
  j["decision"] = {{"position", r.decision.position},
                   {"b_alpha", r.decision.b_alpha},
                   {"randomization_prob", r.decision.randomization_prob},
                   {"ties", r.decision.ties},
                   {"tie_draw", r.decision.tie_draw},
                   {"reject_draw", r.decision.reject_draw}};
  return j;
}

// Exact two-sided 95% binomial interval for k successes in n trials.
inline std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n,
                                                 double level = 0.95) {
  if (n == 0) return {0.0, 1.0};
  const double a = (1.0 - level) / 2.0;
  const auto kd = static_cast<double>(k);
  const auto nd = static_cast<double>(n);
  const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(kd, nd - kd + 1.0, a);
  const double hi = k == n ? 1.0 : boost::math::ibeta_inv(kd + 1.0, nd - kd, 1.0 - a);
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Dataset modes
// ---------------------------------------------------------------------------

namespace detail {

inline KernelSpec dataset_kx(const ExperimentConfig &c) {
  return c.kernel_x.value_or(KernelSpec::gaussian());
}

inline KernelSpec dataset_ky(const ExperimentConfig &c) {
  return c.kernel_y.value_or(KernelSpec::exp_hamming(1.0));
}

// Distribution kernel for reliability modes: kernel_x when it is a
// dist-expmmd spec, otherwise one built on kernel_y. sigma_p overrides.
inline KernelSpec dataset_kp(const ExperimentConfig &c, const KernelSpec &ky) {
  KernelSpec kp;
  if (c.kernel_x) {
    if (c.kernel_x->kind != KernelKind::DistributionExpMmd) {
      throw ConfigError("reliability modes need a dist-expmmd kernel-x");
    }
    kp = *c.kernel_x;
  } else {
    kp = default_distribution_kernel(ky, std::nullopt);
  }
  if (c.sigma_p_set) kp.sigma = c.sigma_p;
  return kp;
}

inline std::vector<ReliabilityRecord> truncate_samples(std::vector<ReliabilityRecord> recs,
                                                       std::optional<std::size_t> r,
                                                       const std::vector<std::size_t> &lines) {
  if (!r) return recs;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].model_samples.size() < *r) {
      throw DataError("line " + std::to_string(lines[i]) + ": fewer than " + std::to_string(*r) +
                      " model samples");
    }
    recs[i].model_samples.resize(*r);
  }
  return recs;
}

inline std::map<std::string, std::vector<std::size_t>> group_indices(const DatasetFile &data,
                                                                     const std::string &key) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto &meta = data.records[i].metadata;
    const auto it = meta.find(key);
    if (it == meta.end()) {
      throw DataError("line " + std::to_string(data.records[i].line) + ": missing group field \"" +
                      key + "\"");
    }
    groups[it->second].push_back(i);
  }
  return groups;
}

inline DatasetFile subset(const DatasetFile &data, const std::vector<std::size_t> &idx) {
  DatasetFile out = data;
  out.records.clear();
  for (auto i : idx) out.records.push_back(data.records[i]);
  return out;
}

inline void require_records(const DatasetFile &data, std::size_t need, const std::string &what) {
  if (data.size() < need) {
    throw DataError("insufficient records for " + what + ": need " + std::to_string(need) +
                    ", have " + std::to_string(data.size()));
  }
}

inline std::vector<std::size_t> record_lines(const DatasetFile &data) {
  std::vector<std::size_t> lines;
  for (const auto &r : data.records) lines.push_back(r.line);
  return lines;
}

inline json dataset_report(const ExperimentConfig &c, const DatasetFile &data) {
  const unsigned threads = c.thread_count();
  const KernelSpec ky = dataset_ky(c);
  switch (c.mode) {
  case Mode::Estimate: {
    require_records(data, 2, "estimate");
    const auto trips = data.triplets();
    const std::span<const Triplet> s(trips);
    const KernelSpec rkx = resolve_input_kernel(dataset_kx(c), s);
    const KernelSpec rky = resolve_output_kernel(ky, s);
    const HMatrix h = h_matrix(s, Kernel(rkx), Kernel(rky), threads);
    json j = {{"test", "acmmd"}, {"statistic", acmmd_sq(h)}, {"n", h.n()},
              {"kernel_x", to_string(rkx)}, {"kernel_y", to_string(rky)}};
    if (h.n() >= 3) j["sigma_h_sq"] = sigma_h_sq(h);
    return j;
  }
  case Mode::Test: {
    require_records(data, 2, "test");
    const auto trips = data.triplets();
    return report_json(acmmd_test(trips, dataset_kx(c), ky, c.alpha, c.bootstrap,
                                  c.require_seed(), threads));
  }
  case Mode::RelEstimate:
  case Mode::RelTest: {
    require_records(data, 2, to_string(c.mode));
    const auto recs =
        truncate_samples(data.reliability_records(), c.inner_samples, record_lines(data));
    const KernelSpec kp = dataset_kp(c, ky);
    if (c.mode == Mode::RelTest) {
      return report_json(
          acmmd_rel_test(recs, ky, kp, c.alpha, c.bootstrap, c.require_seed(), threads));
    }
    const RelEstimate est = acmmd_rel_estimate(recs, ky, kp, threads);
    std::size_t r_min = recs.front().model_samples.size();
    for (const auto &r : recs) r_min = std::min(r_min, r.model_samples.size());
    json j = {{"test", "acmmd-rel"}, {"statistic", est.statistic}, {"n", recs.size()},
              {"r", r_min}, {"kernel_x", to_string(est.kp)}, {"kernel_y", to_string(est.ky)}};
    if (recs.size() >= 3) j["sigma_h_sq"] = sigma_h_sq(est.h);
    return j;
  }
  default:
    throw ConfigError("not a dataset mode");
  }
}

} // namespace detail

inline RecordShape shape_for(Mode m) {
  return m == Mode::RelEstimate || m == Mode::RelTest ? RecordShape::Reliability
                                                      : RecordShape::Triplet;
}

// estimate / test / rel-estimate / rel-test on a loaded dataset. With group_by
// the report holds one entry per group label, in sorted label order.
inline json run_dataset(const ExperimentConfig &c, const DatasetFile &data) {
  json out = json::object();
  out["mode"] = to_string(c.mode);
  if (c.group_by) {
    json groups = json::array();
    for (const auto &[label, idx] : detail::group_indices(data, *c.group_by)) {
      json g = detail::dataset_report(c, detail::subset(data, idx));
      g["group"] = label;
      groups.push_back(std::move(g));
    }
    out["groups"] = std::move(groups);
  } else {
    out["report"] = detail::dataset_report(c, data);
  }
  out["config"] = config_json(c);
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
  std::size_t n = 0;
  double delta_p = 0.0;
  std::string group;  // group mode only
  std::uint64_t seed = 0;
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double runtime_ms = 0.0;
};

struct SweepResult {
  bool group_mode = false;
  std::vector<SweepRow> rows;
  json summary;
};

namespace stream {
inline constexpr std::uint64_t kData = 3;
inline constexpr std::uint64_t kTest = 4;
inline constexpr std::uint64_t kSubsample = 5;
} // namespace stream

namespace detail {

inline std::uint64_t dp_key(double dp) { return std::bit_cast<std::uint64_t>(dp); }

// One toy replicate: data from (seed, n, dp), test seeded from (seed, n, dp).
inline SweepRow toy_cell(const ExperimentConfig &c, std::size_t n, double dp,
                         std::uint64_t seed) {
  toy::Config t = c.toy;
  t.delta_p = dp;
  Rng rng = make_rng(seed, {stream::kData, n, dp_key(dp)});
  const std::uint64_t test_seed = derive_seed(seed, {stream::kTest, n, dp_key(dp)});
  SweepRow row;
  row.n = n;
  row.delta_p = dp;
  row.seed = seed;
  const KernelSpec ky = c.kernel_y.value_or(t.ky());
  TestReport rep;
  if (c.sweep.reliability) {
    const std::size_t r = c.inner_samples.value_or(default_inner_samples(n));
    const auto recs = toy::sample_reliability_records(t, n, r, rng);
    KernelSpec kp = c.kernel_x && c.kernel_x->kind == KernelKind::DistributionExpMmd
                        ? *c.kernel_x
                        : default_distribution_kernel(ky, t.sigma);
    if (c.sigma_p_set) kp.sigma = c.sigma_p;
    rep = acmmd_rel_test(recs, ky, kp, c.alpha, c.bootstrap, test_seed, 1);
  } else {
    const auto trips = toy::sample_triplets(t, n, rng);
    rep = acmmd_test(trips, c.kernel_x.value_or(t.kx), ky, c.alpha, c.bootstrap, test_seed, 1);
  }
  row.statistic = rep.statistic;
  row.p_value = rep.p_value;
  row.reject = rep.reject;
  return row;
}

inline SweepRow group_cell(const ExperimentConfig &c, const DatasetFile &group,
                           const std::string &label, std::size_t n, std::uint64_t seed) {
  require_records(group, n, "group \"" + label + "\"");
  // Subsample n records without replacement (partial Fisher-Yates).
  Rng rng = make_rng(seed, {stream::kSubsample, n});
  std::vector<std::size_t> idx(group.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_index(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  const DatasetFile sub = subset(group, idx);
  const std::uint64_t test_seed = derive_seed(seed, {stream::kTest, n});
  const KernelSpec ky = dataset_ky(c);
  TestReport rep;
  if (c.sweep.reliability) {
    const auto recs =
        truncate_samples(sub.reliability_records(), c.inner_samples, record_lines(sub));
    rep = acmmd_rel_test(recs, ky, dataset_kp(c, ky), c.alpha, c.bootstrap, test_seed, 1);
  } else {
    rep = acmmd_test(sub.triplets(), dataset_kx(c), ky, c.alpha, c.bootstrap, test_seed, 1);
  }
  SweepRow row;
  row.n = n;
  row.group = label;
  row.seed = seed;
  row.statistic = rep.statistic;
  row.p_value = rep.p_value;
  row.reject = rep.reject;
  return row;
}

} // namespace detail

// Runs every (grid point, seed) cell. Replicate s uses seed config.seed + s at
// every grid point. Cells run in parallel; rows come back in grid order
// (n, then delta_p or group, then seed).
inline SweepResult run_sweep(const ExperimentConfig &c, const DatasetFile *data = nullptr) {
  c.validate();
  const std::uint64_t base = c.require_seed();
  SweepResult result;
  result.group_mode = data != nullptr;

  struct Cell {
    std::size_t n;
    double dp;
    std::string label;
    std::size_t group_index;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  std::vector<std::pair<std::string, DatasetFile>> groups;
  if (data) {
    if (c.group_by) {
      for (const auto &[label, idx] : detail::group_indices(*data, *c.group_by)) {
        groups.emplace_back(label, detail::subset(*data, idx));
      }
    } else {
      groups.emplace_back("all", *data);
    }
  }
  for (std::size_t n : c.sweep.n_values) {
    if (data) {
      for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t s = 0; s < c.sweep.n_seeds; ++s) {
          cells.push_back({n, 0.0, groups[g].first, g, base + s});
        }
      }
    } else {
      for (double dp : c.sweep.delta_p_values) {
        for (std::size_t s = 0; s < c.sweep.n_seeds; ++s) cells.push_back({n, dp, "", 0, base + s});
      }
    }
  }

  result.rows.resize(cells.size());
  parallel_for(cells.size(), [&](std::size_t k) {
    const Cell &cell = cells[k];
    const auto t0 = std::chrono::steady_clock::now();
    SweepRow row = data ? detail::group_cell(c, groups[cell.group_index].second, cell.label,
                                             cell.n, cell.seed)
                        : detail::toy_cell(c, cell.n, cell.dp, cell.seed);
    if (c.record_timing) {
      row.runtime_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    }
    result.rows[k] = std::move(row);
  }, c.thread_count());

  // Summary per grid point, in row order.
  json points = json::array();
  for (std::size_t k = 0; k < result.rows.size();) {
    std::size_t j = k;
    std::size_t rejects = 0;
    double stat_sum = 0.0;
    while (j < result.rows.size() && result.rows[j].n == result.rows[k].n &&
           result.rows[j].delta_p == result.rows[k].delta_p &&
           result.rows[j].group == result.rows[k].group) {
      rejects += result.rows[j].reject;
      stat_sum += result.rows[j].statistic;
      ++j;
    }
    const std::size_t runs = j - k;
    const auto [lo, hi] = clopper_pearson(rejects, runs);
    json p = {{"n", result.rows[k].n}};
    if (result.group_mode) {
      p["group"] = result.rows[k].group;
    } else {
      p["delta_p"] = result.rows[k].delta_p;
    }
    p["runs"] = runs;
    p["rejections"] = rejects;
    p["rejection_rate"] = static_cast<double>(rejects) / static_cast<double>(runs);
    p["ci95"] = {lo, hi};
    p["mean_statistic"] = stat_sum / static_cast<double>(runs);
    if (!result.group_mode && !c.sweep.reliability) {
      toy::Config t = c.toy;
      t.delta_p = result.rows[k].delta_p;
      p["acmmd_sq_exact"] = toy::acmmd_sq_exact(t);
    }
    points.push_back(std::move(p));
    k = j;
  }
  result.summary = {{"points", points}, {"config", config_json(c)}};
  return result;
}

inline void write_sweep_csv(std::ostream &out, const SweepResult &r) {
  out << (r.group_mode ? "n,group,seed,statistic,p_value,reject,runtime_ms\n"
                       : "n,delta_p,seed,statistic,p_value,reject,runtime_ms\n");
  for (const auto &row : r.rows) {
    out << row.n << ',';
    if (r.group_mode) {
      out << row.group;
    } else {
      out << detail::format_double(row.delta_p);
    }
    out << ',' << row.seed << ',' << detail::format_double(row.statistic) << ','
        << detail::format_double(row.p_value) << ',' << (row.reject ? 1 : 0) << ','
        << detail::format_double(row.runtime_ms) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Toy commands
// ---------------------------------------------------------------------------

// n toy records from the config's seed. With inner_samples set the records
// carry that many model samples (reliability shape).
inline void toy_generate(const ExperimentConfig &c, std::ostream &out) {
  c.validate();
  Rng rng = make_rng(c.require_seed(), {stream::kData});
  if (c.inner_samples) {
    const auto recs = toy::sample_reliability_records(c.toy, c.n, *c.inner_samples, rng);
    write_dataset(out, *toy::alphabet(), std::span<const ReliabilityRecord>(recs));
  } else {
    const auto trips = toy::sample_triplets(c.toy, c.n, rng);
    write_dataset(out, *toy::alphabet(), std::span<const Triplet>(trips));
  }
}

inline json toy_exact(const ExperimentConfig &c) {
  c.validate();
  json j = json::object();
  j["acmmd_sq_exact"] = toy::acmmd_sq_exact(c.toy);
  j["acmmd_sq_constant"] = toy::acmmd_sq_constant(c.toy);
  j["acmmd_rel_sq_exact"] = toy::acmmd_rel_sq_exact(c.toy);
  j["acmmd_rel_sq_constant"] = toy::acmmd_rel_sq_constant(c.toy);
  j["toy"] = toy_json(c.toy);
  return j;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

// Writes `text` to path, or to stdout for "" and "-".
inline void write_output(const std::string &path, const std::string &text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write output: " + path);
  f << text;
  if (!f) throw DataError("failed writing output: " + path);
}

inline std::string summary_path(const ExperimentConfig &c) {
  if (!c.summary_out.empty()) return c.summary_out;
  if (c.out.empty() || c.out == "-") return "";
  return c.out + ".summary.json";
}

} // namespace acmmd

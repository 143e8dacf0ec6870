#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "acmmd/experiment.hpp"

namespace {

using namespace acmmd;
using nlohmann::json;

ExperimentConfig small_sweep() {
  ExperimentConfig c;
  c.mode = Mode::Sweep;
  c.seed = 11;
  c.sweep.n_values = {20, 30};
  c.sweep.delta_p_values = {0.0, 0.25};
  c.sweep.n_seeds = 4;
  c.bootstrap = 19;
  return c;
}

DatasetFile grouped_dataset(std::size_t per_group) {
  Rng rng = make_rng(7);
  std::ostringstream text;
  text << "#acmmd {\"alphabet\": [\"A\", \"B\", \"STOP\"], \"terminal\": \"STOP\"}\n";
  for (const char *family : {"b", "a"}) {
    toy::Config t = toy::default_config();
    t.delta_p = family[0] == 'a' ? 0.0 : 0.25;
    for (std::size_t i = 0; i < per_group; ++i) {
      const Triplet tr = toy::sample_triplet(t, rng);
      json j = {{"x", {{"scalar", std::get<double>(tr.x)}}},
                {"y", {{"tokens", tr.y.tokens.symbols()}}},
                {"y_model", {{"tokens", tr.y_model.tokens.symbols()}}},
                {"family", family}};
      text << j.dump() << '\n';
    }
  }
  std::istringstream in(text.str());
  return parse_dataset(in, RecordShape::Triplet);
}

TEST(Config, ParsesAndRoundTrips) {
  const json doc = json::parse(R"({
    "mode": "sweep", "seed": 5, "alpha": 0.1, "bootstrap": 50, "sigma_p": "median",
    "kernel_y": "exp-hamming:lambda=0.5",
    "sweep": {"n_values": [10, 20], "delta_p_values": [0.1], "n_seeds": 3, "statistic": "rel"},
    "toy": {"grid": {"lo": 0.2, "hi": 0.4, "m": 3}, "lambda": 0.5, "sigma": 2.0}
  })");
  const ExperimentConfig c = parse_config(doc);
  EXPECT_EQ(c.mode, Mode::Sweep);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.alpha, 0.1);
  EXPECT_TRUE(c.sigma_p_set);
  EXPECT_FALSE(c.sigma_p);
  EXPECT_TRUE(c.sweep.reliability);
  EXPECT_EQ(c.toy.prior.atoms().size(), 3u);
  EXPECT_EQ(c.toy.sigma, 2.0);
  const ExperimentConfig back = parse_config(config_json(c));
  EXPECT_EQ(config_json(back), config_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(json::parse(R"({"bootstrapp": 10})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"toy": {"dp": 0.1}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"mode": "fit"})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"sweep": {"statistic": "other"}})")), ConfigError);
  ExperimentConfig c;
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.alpha = 0.05;
  c.toy.delta_p = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ExperimentConfig{}.require_seed(), ConfigError);
}

TEST(Sweep, CsvHeaderAndRowOrder) {
  const SweepResult r = run_sweep(small_sweep());
  std::ostringstream csv;
  write_sweep_csv(csv, r);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "n,delta_p,seed,statistic,p_value,reject,runtime_ms");
  ASSERT_EQ(r.rows.size(), 16u);
  EXPECT_EQ(r.rows[0].n, 20u);
  EXPECT_EQ(r.rows[0].delta_p, 0.0);
  EXPECT_EQ(r.rows[0].seed, 11u);
  EXPECT_EQ(r.rows[3].seed, 14u);
  EXPECT_EQ(r.rows[4].delta_p, 0.25);
  EXPECT_EQ(r.rows[8].n, 30u);
  for (const auto &row : r.rows) EXPECT_EQ(row.runtime_ms, 0.0);
  const auto &points = r.summary.at("points");
  ASSERT_EQ(points.size(), 4u);
  EXPECT_EQ(points[0].at("runs"), 4);
  EXPECT_EQ(points[1].at("acmmd_sq_exact").get<double>(),
            toy::acmmd_sq_exact([] {
              toy::Config t = toy::default_config();
              t.delta_p = 0.25;
              return t;
            }()));
}

TEST(Sweep, DeterministicAcrossThreadCounts) {
  ExperimentConfig a = small_sweep();
  a.threads = 1;
  ExperimentConfig b = small_sweep();
  b.threads = 4;
  std::ostringstream ca, cb;
  write_sweep_csv(ca, run_sweep(a));
  write_sweep_csv(cb, run_sweep(b));
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(run_sweep(a).summary.dump(), run_sweep(b).summary.dump());
}

TEST(Sweep, ReliabilityStatistic) {
  ExperimentConfig c = small_sweep();
  c.sweep.reliability = true;
  c.inner_samples = 4;
  c.sweep.n_values = {10};
  const SweepResult r = run_sweep(c);
  EXPECT_EQ(r.rows.size(), 8u);
  EXPECT_FALSE(r.summary.at("points")[0].contains("acmmd_sq_exact"));
}

TEST(Sweep, GroupMode) {
  const DatasetFile data = grouped_dataset(40);
  ExperimentConfig c = small_sweep();
  c.group_by = "family";
  c.sweep.n_values = {10, 40};
  const SweepResult r = run_sweep(c, &data);
  std::ostringstream csv;
  write_sweep_csv(csv, r);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "n,group,seed,statistic,p_value,reject,runtime_ms");
  ASSERT_EQ(r.rows.size(), 16u);
  EXPECT_EQ(r.rows[0].group, "a");
  EXPECT_EQ(r.rows[4].group, "b");
  // Full-size subsamples are permutations: same statistic for every seed.
  EXPECT_NEAR(r.rows[8].statistic, r.rows[9].statistic, 1e-12);
  c.sweep.n_values = {41};
  EXPECT_THROW(run_sweep(c, &data), DataError);
  c.group_by = "missing";
  c.sweep.n_values = {10};
  EXPECT_THROW(run_sweep(c, &data), DataError);
  c.group_by.reset();
  EXPECT_EQ(run_sweep(c, &data).rows[0].group, "all");
}

TEST(DatasetModes, TwoRecordEstimateIsH01) {
  Rng rng = make_rng(3);
  const auto trips = toy::sample_triplets(toy::default_config(), 2, rng);
  std::ostringstream text;
  write_dataset(text, *toy::alphabet(), std::span<const Triplet>(trips));
  std::istringstream in(text.str());
  const DatasetFile data = parse_dataset(in, RecordShape::Triplet);
  ExperimentConfig c;
  c.mode = Mode::Estimate;
  c.kernel_x = KernelSpec::gaussian(1.0);
  const json out = run_dataset(c, data);
  const HMatrix h = h_matrix(trips, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming(1.0));
  EXPECT_EQ(out.at("report").at("statistic").get<double>(), h(0, 1));
  EXPECT_EQ(out.at("config").at("kernel_x"), "gaussian:sigma=1.0");
  EXPECT_FALSE(out.at("config").contains("threads"));
}

TEST(DatasetModes, GroupedTestReports) {
  const DatasetFile data = grouped_dataset(30);
  ExperimentConfig c;
  c.mode = Mode::Test;
  c.seed = 2;
  c.group_by = "family";
  const json out = run_dataset(c, data);
  ASSERT_EQ(out.at("groups").size(), 2u);
  EXPECT_EQ(out.at("groups")[0].at("group"), "a");
  EXPECT_EQ(out.at("groups")[1].at("n"), 30);
  c.seed.reset();
  EXPECT_THROW(run_dataset(c, data), ConfigError);
}

TEST(DatasetModes, ReliabilityKernelChecks) {
  Rng rng = make_rng(4);
  const auto recs = toy::sample_reliability_records(toy::default_config(), 12, 6, rng);
  std::ostringstream text;
  write_dataset(text, *toy::alphabet(), std::span<const ReliabilityRecord>(recs));
  std::istringstream in(text.str());
  const DatasetFile data = parse_dataset(in, RecordShape::Reliability);
  ExperimentConfig c;
  c.mode = Mode::RelEstimate;
  c.sigma_p = 1.0;
  c.sigma_p_set = true;
  const json out = run_dataset(c, data);
  EXPECT_EQ(out.at("report").at("statistic").get<double>(),
            acmmd_rel_sq(recs, KernelSpec::exp_hamming(), 1.0));
  EXPECT_EQ(out.at("report").at("r"), 6);
  c.inner_samples = 4;
  EXPECT_EQ(run_dataset(c, data).at("report").at("r"), 4);
  c.inner_samples = 7;
  EXPECT_THROW(run_dataset(c, data), DataError);
  c.inner_samples.reset();
  c.kernel_x = KernelSpec::gaussian(1.0);
  EXPECT_THROW(run_dataset(c, data), ConfigError);
}

TEST(ClopperPearson, KnownValues) {
  const auto [lo, hi] = clopper_pearson(15, 300);
  EXPECT_NEAR(lo, 0.0282, 5e-4);
  EXPECT_NEAR(hi, 0.0811, 5e-4);
  EXPECT_EQ(clopper_pearson(0, 10).first, 0.0);
  EXPECT_NEAR(clopper_pearson(0, 10).second, 1.0 - std::pow(0.025, 0.1), 1e-12);
  EXPECT_EQ(clopper_pearson(10, 10).second, 1.0);
}

TEST(ToyCommands, GenerateIsDeterministicAndLoads) {
  ExperimentConfig c;
  c.mode = Mode::Toy;
  c.seed = 9;
  c.n = 15;
  std::ostringstream a, b;
  toy_generate(c, a);
  toy_generate(c, b);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  EXPECT_EQ(parse_dataset(in, RecordShape::Triplet).size(), 15u);
  c.n = 0;
  std::ostringstream empty;
  toy_generate(c, empty);
  std::istringstream ein(empty.str());
  EXPECT_THROW(parse_dataset(ein, RecordShape::Triplet), DataError);
  const json exact = toy_exact(c);
  EXPECT_EQ(exact.at("acmmd_sq_exact").get<double>(), toy::acmmd_sq_exact(c.toy));
}

} // namespace

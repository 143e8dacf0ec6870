// acmmd command-line front end.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "acmmd/acmmd.hpp"

namespace {

using acmmd::ConfigError;
using acmmd::DataError;
using acmmd::ExperimentConfig;
using acmmd::Mode;

struct Flags {
  std::string config;
  std::optional<std::string> input, kernel_x, kernel_y, sigma_p, out, summary_out, group_by,
      statistic;
  std::optional<double> alpha, delta_p, lambda;
  std::optional<std::size_t> bootstrap, inner_samples, n, n_seeds;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::vector<std::size_t> n_values;
  std::vector<double> delta_p_values;
  bool record_timing = false;
};

void add_common(CLI::App *cmd, Flags &f) {
  cmd->add_option("--config", f.config, "JSON config file (flags override it)");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output path (default stdout)");
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
}

void add_data(CLI::App *cmd, Flags &f) {
  cmd->add_option("--input", f.input, "JSON-lines dataset");
  cmd->add_option("--kernel-x", f.kernel_x, "input kernel spec");
  cmd->add_option("--kernel-y", f.kernel_y, "output kernel spec");
  cmd->add_option("--group-by", f.group_by, "metadata field to group records by");
}

void add_test(CLI::App *cmd, Flags &f) {
  cmd->add_option("--alpha", f.alpha, "test level");
  cmd->add_option("--bootstrap", f.bootstrap, "bootstrap replicates B");
}

void add_rel(CLI::App *cmd, Flags &f) {
  cmd->add_option("--sigma-p", f.sigma_p, "distribution kernel bandwidth (number or median)");
  cmd->add_option("--inner-samples", f.inner_samples, "model samples R per record");
}

void add_toy(CLI::App *cmd, Flags &f) {
  cmd->add_option("--delta-p", f.delta_p, "toy perturbation");
  cmd->add_option("--lambda", f.lambda, "toy hamming decay");
}

ExperimentConfig build_config(Mode mode, const Flags &f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : acmmd::load_config(f.config);
  c.mode = mode;
  auto kernel = [](const std::string &s) { return acmmd::detail::parse_kernel_arg(s); };
  if (f.seed) c.seed = *f.seed;
  if (f.input) c.input = *f.input;
  if (f.out) c.out = *f.out;
  if (f.summary_out) c.summary_out = *f.summary_out;
  if (f.kernel_x) c.kernel_x = kernel(*f.kernel_x);
  if (f.kernel_y) c.kernel_y = kernel(*f.kernel_y);
  if (f.sigma_p) {
    c.sigma_p_set = true;
    if (*f.sigma_p == "median") {
      c.sigma_p.reset();
    } else {
      try {
        c.sigma_p = std::stod(*f.sigma_p);
      } catch (const std::exception &) {
        throw ConfigError("--sigma-p must be a number or median");
      }
    }
  }
  if (f.alpha) c.alpha = *f.alpha;
  if (f.bootstrap) c.bootstrap = *f.bootstrap;
  if (f.inner_samples) c.inner_samples = *f.inner_samples;
  if (f.group_by) c.group_by = *f.group_by;
  if (f.n) c.n = *f.n;
  if (f.threads) c.threads = *f.threads;
  if (f.record_timing) c.record_timing = true;
  if (!f.n_values.empty()) c.sweep.n_values = f.n_values;
  if (!f.delta_p_values.empty()) c.sweep.delta_p_values = f.delta_p_values;
  if (f.n_seeds) c.sweep.n_seeds = *f.n_seeds;
  if (f.statistic) {
    if (*f.statistic != "acmmd" && *f.statistic != "rel") {
      throw ConfigError("--statistic must be acmmd or rel");
    }
    c.sweep.reliability = *f.statistic == "rel";
  }
  if (f.delta_p) c.toy.delta_p = *f.delta_p;
  if (f.lambda) c.toy.lambda = *f.lambda;
  if (mode == Mode::Toy && c.sigma_p) c.toy.sigma = *c.sigma_p;
  c.validate();
  return c;
}

void warn_bootstrap(const ExperimentConfig &c) {
  const std::size_t need = acmmd::min_bootstrap(c.alpha);
  if (c.bootstrap < need) {
    std::cerr << "warning: B = " << c.bootstrap << " < " << need
              << "; a level-" << c.alpha << " test can never reject\n";
  }
}

int run(Mode mode, const std::string &sub, const Flags &f) {
  const ExperimentConfig c = build_config(mode, f);
  switch (mode) {
  case Mode::Estimate:
  case Mode::Test:
  case Mode::RelEstimate:
  case Mode::RelTest: {
    if (c.input.empty()) throw ConfigError(sub + " requires --input");
    if (mode == Mode::Test || mode == Mode::RelTest) {
      c.require_seed();
      warn_bootstrap(c);
    }
    const auto data = acmmd::load_dataset(c.input, acmmd::shape_for(mode));
    acmmd::write_output(c.out, acmmd::run_dataset(c, data).dump(2) + "\n");
    return 0;
  }
  case Mode::Sweep: {
    warn_bootstrap(c);
    std::optional<acmmd::DatasetFile> data;
    if (!c.input.empty()) {
      data = acmmd::load_dataset(c.input, c.sweep.reliability ? acmmd::RecordShape::Reliability
                                                              : acmmd::RecordShape::Triplet);
    } else if (c.group_by) {
      throw ConfigError("--group-by requires --input");
    }
    const auto result = acmmd::run_sweep(c, data ? &*data : nullptr);
    std::ostringstream csv;
    acmmd::write_sweep_csv(csv, result);
    acmmd::write_output(c.out, csv.str());
    const std::string summary = acmmd::summary_path(c);
    if (!summary.empty()) acmmd::write_output(summary, result.summary.dump(2) + "\n");
    return 0;
  }
  case Mode::Toy: {
    if (sub == "toy-exact") {
      acmmd::write_output(c.out, acmmd::toy_exact(c).dump(2) + "\n");
    } else {
      std::ostringstream text;
      acmmd::toy_generate(c, text);
      acmmd::write_output(c.out, text.str());
    }
    return 0;
  }
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Conditional goodness-of-fit and reliability tests for sequence models"};
  app.require_subcommand(1);
  Flags f;

  auto *estimate = app.add_subcommand("estimate", "ACMMD^2 estimate on a dataset");
  auto *test = app.add_subcommand("test", "ACMMD wild-bootstrap test on a dataset");
  auto *rel_estimate = app.add_subcommand("rel-estimate", "ACMMD-Rel^2 estimate on a dataset");
  auto *rel_test = app.add_subcommand("rel-test", "ACMMD-Rel test on a dataset");
  auto *sweep = app.add_subcommand("sweep", "rejection-rate sweep (toy model or dataset groups)");
  auto *toy_generate = app.add_subcommand("toy-generate", "write a toy dataset");
  auto *toy_exact = app.add_subcommand("toy-exact", "closed-form toy values");

  for (auto *cmd : {estimate, test, rel_estimate, rel_test, sweep, toy_generate, toy_exact}) {
    add_common(cmd, f);
  }
  for (auto *cmd : {estimate, test, rel_estimate, rel_test, sweep}) add_data(cmd, f);
  for (auto *cmd : {test, rel_test, sweep}) add_test(cmd, f);
  for (auto *cmd : {rel_estimate, rel_test, sweep, toy_generate, toy_exact}) add_rel(cmd, f);
  for (auto *cmd : {sweep, toy_generate, toy_exact}) add_toy(cmd, f);
  toy_generate->add_option("--n", f.n, "number of records");
  sweep->add_option("--n-values", f.n_values, "sample sizes")->delimiter(',');
  sweep->add_option("--delta-p-values", f.delta_p_values, "toy perturbations")->delimiter(',');
  sweep->add_option("--n-seeds", f.n_seeds, "replicates per grid point");
  sweep->add_option("--statistic", f.statistic, "acmmd or rel");
  sweep->add_option("--summary-out", f.summary_out, "summary JSON path");
  sweep->add_flag("--record-timing", f.record_timing, "fill runtime_ms (output no longer reproducible)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }

  const std::pair<CLI::App *, Mode> commands[] = {
      {estimate, Mode::Estimate}, {test, Mode::Test},      {rel_estimate, Mode::RelEstimate},
      {rel_test, Mode::RelTest},  {sweep, Mode::Sweep},    {toy_generate, Mode::Toy},
      {toy_exact, Mode::Toy}};
  try {
    for (const auto &[cmd, mode] : commands) {
      if (cmd->parsed()) return run(mode, cmd->get_name(), f);
    }
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

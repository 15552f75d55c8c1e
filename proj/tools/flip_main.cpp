// Batch front end: panel ingestion, flip-effect estimation, exact oracle
// checks, and the synthetic coverage study. Everything is seeded and writes a
// manifest next to its outputs.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "flip/estimators.hpp"
#include "flip/oracle.hpp"
#include "flip/panel.hpp"
#include "flip/simharness.hpp"
#include "flip/util/error.hpp"
#include "flip/util/manifest.hpp"
#include "flip/util/stats.hpp"
#include "flip/util/text.hpp"

namespace fs = std::filesystem;
using flip::text::format_double;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct GlobalFlags {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out_dir = ".";
};

fs::path prepare_out_dir(const GlobalFlags& g) {
  fs::path dir(g.out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  return dir;
}

struct EstimateArgs {
  std::string panel_path;
  std::string schema_path;
  std::string regime;
  std::string contrast;
  std::string weight = "smooth-trim:20";
  std::string estimator = "sdr";
  std::string backend = "ensemble";
  int folds = 2;
  double clip = 0.01;
  double level = 0.95;
  bool assume_positivity = false;
};

void write_report_line(std::ofstream& out, const std::string& key, double v) {
  out << key << " = " << format_double(v) << '\n';
}

int cmd_estimate(const GlobalFlags& g, const EstimateArgs& a) {
  if (a.regime.empty() == a.contrast.empty())
    throw flip::ConfigError("pass exactly one of --regime or --contrast");
  const auto dir = prepare_out_dir(g);
  const auto schema = flip::CsvSchema::load(a.schema_path);
  const auto data = flip::load_long_csv(a.panel_path, schema);
  const auto weight = flip::SmoothWeight::parse(a.weight);
  const auto kind = flip::parse_estimator(a.estimator);

  flip::EstimatorOptions opts;
  opts.backend = flip::BackendConfig::parse(a.backend);
  opts.folds = a.folds;
  opts.clip = a.clip;
  opts.level = a.level;
  opts.seed = g.seed;
  opts.assume_positivity = a.assume_positivity;

  flip::util::RunManifest manifest("estimate");
  manifest.add_input("panel", a.panel_path);
  manifest.add_input("schema", a.schema_path);
  manifest.add("seed", std::to_string(g.seed));
  manifest.add("weight", weight.name());
  manifest.add("estimator", a.estimator);
  manifest.add("backend", opts.backend.name());
  manifest.add("folds", std::to_string(a.folds));
  manifest.add("clip", format_double(a.clip));
  manifest.add("level", format_double(a.level));
  manifest.add("assume_positivity", a.assume_positivity ? "1" : "0");

  std::ofstream report(dir / "report.txt");
  std::ofstream influence(dir / "influence.csv");
  report << "command = estimate\n";
  report << "n = " << data.size() << "\nhorizon = " << data.horizon() << '\n';
  report << "weight = " << weight.name() << "\nestimator = " << a.estimator << '\n';

  if (!a.regime.empty()) {
    const auto regime = flip::TargetRegime::parse(a.regime);
    manifest.add("regime", regime.to_string());
    flip::EstimateReport rep;
    switch (kind) {
      case flip::EstimatorKind::mr:
        rep = flip::mr_estimate(data, regime, weight, opts);
        break;
      case flip::EstimatorKind::sdr:
        rep = flip::sdr_estimate(data, regime, weight, opts);
        break;
      case flip::EstimatorKind::ipw:
        rep = flip::ipw_estimate(data, regime, weight, opts);
        break;
    }
    report << "regime = " << regime.to_string() << '\n';
    write_report_line(report, "psi_hat", rep.psi_hat);
    write_report_line(report, "sigma2_hat", rep.sigma2_hat);
    write_report_line(report, "se", std::sqrt(rep.sigma2_hat / rep.n_eval));
    write_report_line(report, "ci_low", rep.ci_low);
    write_report_line(report, "ci_high", rep.ci_high);
    for (const auto& note : rep.notes) report << "note = " << note << '\n';
    influence << "id,influence\n";
    for (std::size_t i = 0; i < data.size(); ++i)
      influence << data.id(i) << ',' << format_double(rep.influence[i]) << '\n';
  } else {
    const auto parts = flip::text::split(a.contrast, ':');
    if (parts.size() != 2)
      throw flip::ConfigError("--contrast expects <bits>:<bits>");
    const auto regime_a = flip::TargetRegime::parse(parts[0]);
    const auto regime_b = flip::TargetRegime::parse(parts[1]);
    manifest.add("contrast", regime_a.to_string() + ":" + regime_b.to_string());
    const auto rep = flip::flip_effect(data, regime_a, regime_b, weight, opts, kind);
    report << "contrast = " << regime_a.to_string() << ":" << regime_b.to_string()
           << '\n';
    write_report_line(report, "psi_a", rep.psi_a.psi_hat);
    write_report_line(report, "psi_a_ci_low", rep.psi_a.ci_low);
    write_report_line(report, "psi_a_ci_high", rep.psi_a.ci_high);
    write_report_line(report, "psi_a_prime", rep.psi_a_prime.psi_hat);
    write_report_line(report, "psi_a_prime_ci_low", rep.psi_a_prime.ci_low);
    write_report_line(report, "psi_a_prime_ci_high", rep.psi_a_prime.ci_high);
    write_report_line(report, "numerator", rep.numerator);
    write_report_line(report, "numerator_se", rep.numerator_se);
    write_report_line(report, "numerator_ci_low", rep.numerator_ci_low);
    write_report_line(report, "numerator_ci_high", rep.numerator_ci_high);
    for (std::size_t t = 0; t < rep.delta_t.size(); ++t) {
      write_report_line(report, "delta_t_" + std::to_string(t + 1), rep.delta_t[t]);
      write_report_line(report, "delta_t_" + std::to_string(t + 1) + "_se",
                        rep.delta_t_se[t]);
    }
    write_report_line(report, "denominator", rep.denominator);
    write_report_line(report, "ratio", rep.ratio);
    write_report_line(report, "ratio_se", rep.ratio_se);
    write_report_line(report, "ratio_ci_low", rep.ci_low);
    write_report_line(report, "ratio_ci_high", rep.ci_high);
    for (const auto& wmsg : rep.warnings) report << "warning = " << wmsg << '\n';
    for (const auto& note : rep.psi_a.notes) report << "note = " << note << '\n';
    influence << "id,influence_psi_a,influence_psi_a_prime,influence_ratio\n";
    for (std::size_t i = 0; i < data.size(); ++i)
      influence << data.id(i) << ',' << format_double(rep.psi_a.influence[i])
                << ',' << format_double(rep.psi_a_prime.influence[i]) << ','
                << format_double(rep.ratio_influence[i]) << '\n';
  }
  manifest.write((dir / "manifest.txt").string(), utc_now());
  std::cout << "wrote " << (dir / "report.txt").string() << '\n';
  return 0;
}

int cmd_ingest_check(const GlobalFlags& g, const std::string& panel_path,
                     const std::string& schema_path) {
  const auto schema = flip::CsvSchema::load(schema_path);
  const auto data = flip::load_long_csv(panel_path, schema);
  std::cout << "ok: " << data.size() << " subjects, horizon " << data.horizon()
            << ", covariate dims";
  for (int d : data.covariate_dims()) std::cout << ' ' << d;
  std::cout << '\n';
  const auto dir = prepare_out_dir(g);
  flip::util::RunManifest manifest("ingest-check");
  manifest.add_input("panel", panel_path);
  manifest.add_input("schema", schema_path);
  manifest.add("n", std::to_string(data.size()));
  manifest.add("horizon", std::to_string(data.horizon()));
  manifest.write((dir / "manifest.txt").string(), utc_now());
  return 0;
}

struct SimulateArgs {
  std::size_t n = 5000;
  double floor = 0.0;
};

int cmd_simulate(const GlobalFlags& g, const SimulateArgs& a) {
  const auto dir = prepare_out_dir(g);
  const auto data = flip::sim::generate_dgp(a.n, g.seed, {a.floor});
  const auto path = dir / "dgp_panel.csv";
  std::ofstream out(path);
  out << "id,t,a,y,x,true_pi\n";
  for (std::size_t i = 0; i < data.panel.size(); ++i) {
    const auto& tr = data.panel.subject(i);
    for (int t = 1; t <= 2; ++t) {
      out << data.panel.id(i) << ',' << t << ','
          << tr.treatments[static_cast<std::size_t>(t - 1)] << ',';
      if (t == 2) out << format_double(tr.outcome);
      out << ',' << format_double(tr.covariates[static_cast<std::size_t>(t - 1)][0])
          << ',' << format_double(t == 1 ? data.pi1[i] : data.pi2[i]) << '\n';
    }
  }
  flip::util::RunManifest manifest("simulate");
  manifest.add("n", std::to_string(a.n));
  manifest.add("seed", std::to_string(g.seed));
  manifest.add("floor", format_double(a.floor));
  manifest.add("output.panel.sha256",
               flip::util::Sha256::of_file(path.string()));
  manifest.write((dir / "manifest.txt").string(), utc_now());
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

struct OracleArgs {
  std::string world_path;
  std::string check = "all";
  std::string weight;  // empty = the built-in catalog
  std::string regime;
  std::string contrast = "";
  std::size_t draws = 200000;
  std::size_t state_budget = flip::oracle::kDefaultTermBudget;
};

std::vector<flip::oracle::OracleWeight> oracle_weight_list(const std::string& spec) {
  using OW = flip::oracle::OracleWeight;
  if (!spec.empty()) return {OW::parse(spec)};
  std::vector<OW> out;
  for (const char* name : {"one", "target", "nontarget", "overlap", "entropy"})
    out.push_back(OW::parse(name));
  out.push_back(OW::wrap(flip::SmoothWeight{flip::WeightKind::smooth_trim, 20.0}));
  out.push_back(OW::hard_trim(0.2));
  out.push_back(OW::matching());
  return out;
}

int cmd_oracle(const GlobalFlags& g, const OracleArgs& a) {
  using namespace flip::oracle;
  const auto dir = prepare_out_dir(g);
  const DiscreteWorld world = DiscreteWorld::load(a.world_path);
  std::ofstream report(dir / "oracle_report.txt");
  int failures = 0;
  auto line = [&](bool pass, const std::string& msg) {
    const std::string s = std::string(pass ? "PASS " : "FAIL ") + msg;
    std::cout << s << '\n';
    report << s << '\n';
    if (!pass) ++failures;
  };

  if (a.check == "wate" || a.check == "all") {
    if (world.horizon != 1) {
      if (a.check == "wate") line(false, "wate: world horizon must be 1");
      // under --check all, the single-timepoint check simply does not apply
    } else {
      for (const auto& w : oracle_weight_list(a.weight)) {
        try {
          const WatePair pair = exact_wate_single(world, w);
          const bool ok = std::fabs(pair.interventional - pair.wate) <= 1e-12;
          line(ok, "wate " + w.name() + ": interventional=" +
                       format_double(pair.interventional) +
                       " wate=" + format_double(pair.wate));
        } catch (const flip::Error& e) {
          line(false, "wate " + w.name() + ": " + e.what());
        }
      }
    }
  }
  if (a.check == "ident" || a.check == "all") {
    const auto regime =
        a.regime.empty() ? flip::TargetRegime::repeat(1, world.horizon)
                         : flip::TargetRegime::parse(a.regime);
    for (const auto& w : oracle_weight_list(
             a.weight.empty() ? "overlap" : a.weight)) {
      try {
        const double psi = exact_psi(world, regime, w, a.state_budget);
        const auto draws = simulate_flip(world, regime, w, a.draws, g.seed);
        double mean = 0.0, sq = 0.0;
        for (const auto& d : draws) mean += d.y;
        mean /= static_cast<double>(draws.size());
        for (const auto& d : draws) sq += (d.y - mean) * (d.y - mean);
        const double se = std::sqrt(sq / draws.size() / draws.size());
        const bool ok = std::fabs(mean - psi) <= 4.0 * se;
        line(ok, "ident " + w.name() + ": exact=" + format_double(psi) +
                     " mechanism-mean=" + format_double(mean) +
                     " se=" + format_double(se));
      } catch (const flip::IdentificationError& e) {
        line(false, "ident " + w.name() + ": " + e.what());
      }
    }
  }
  if (a.check == "sharp-null" || a.check == "all") {
    const auto parts = a.contrast.empty()
                           ? std::vector<std::string>{"", ""}
                           : flip::text::split(a.contrast, ':');
    const auto ra = parts[0].empty() ? flip::TargetRegime::repeat(1, world.horizon)
                                     : flip::TargetRegime::parse(parts[0]);
    const auto rb = parts[1].empty() ? flip::TargetRegime::repeat(0, world.horizon)
                                     : flip::TargetRegime::parse(parts[1]);
    for (const auto& w : oracle_weight_list(
             a.weight.empty() ? "smooth-trim:10" : a.weight)) {
      try {
        const auto res = sharp_null_certify(world, ra, rb, w, 1e-12, a.state_budget);
        if (res.inert)
          line(res.certified, "sharp-null " + w.name() + ": ratio=" +
                                  format_double(res.value.ratio) +
                                  " (treatment-inert world)");
        else
          line(true, "sharp-null " + w.name() + ": ratio=" +
                         format_double(res.value.ratio) +
                         " (world is not treatment-inert; value reported "
                         "without assertion)");
      } catch (const flip::Error& e) {
        line(false, std::string("sharp-null ") + w.name() + ": " + e.what());
      }
    }
  }
  flip::util::RunManifest manifest("oracle");
  manifest.add_input("world", a.world_path);
  manifest.add("check", a.check);
  manifest.add("seed", std::to_string(g.seed));
  manifest.write((dir / "manifest.txt").string(), utc_now());
  return failures == 0 ? 0 : 1;
}

int cmd_coverage(const GlobalFlags& g, const std::string& config_path) {
  const auto dir = prepare_out_dir(g);
  auto cfg = flip::sim::ExperimentConfig::load(config_path);
  if (g.threads != 0) cfg.threads = g.threads;
  const auto cells = flip::sim::run_coverage_grid(cfg);
  flip::sim::write_coverage_csv(cells, (dir / "coverage_cells.csv").string());
  flip::sim::write_coverage_long_csv(cells, (dir / "coverage_long.csv").string());
  flip::util::RunManifest manifest("coverage");
  manifest.add_input("config", config_path);
  manifest.add("config.describe", cfg.describe());
  manifest.add("seed", std::to_string(cfg.seed));
  manifest.write((dir / "manifest.txt").string(), utc_now());
  std::cout << "wrote " << (dir / "coverage_cells.csv").string() << " ("
            << cells.size() << " cells)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal interventional flip-effect estimation"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--seed", g.seed, "root seed for all stochastic steps");
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)");
  app.add_option("--out-dir", g.out_dir, "output directory");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "estimate flip effects from a panel CSV");
  estimate->add_option("--panel", est.panel_path, "long-format panel CSV")->required();
  estimate->add_option("--schema", est.schema_path, "covariate schema file")->required();
  estimate->add_option("--regime", est.regime, "target regime bitstring, e.g. 1111");
  estimate->add_option("--contrast", est.contrast, "two regimes <bits>:<bits>");
  estimate->add_option("--weight", est.weight,
                       "one|target|nontarget|overlap|smooth-trim:k|entropy");
  estimate->add_option("--estimator", est.estimator, "mr|sdr|ipw");
  estimate->add_option("--backend", est.backend, "linear|logistic|knn:k|tree:d|ensemble");
  estimate->add_option("--folds", est.folds, "cross-fitting folds (>= 2)");
  estimate->add_option("--clip", est.clip, "propensity clip in [0, 0.1]");
  estimate->add_option("--level", est.level, "confidence level");
  estimate->add_flag("--assume-positivity", est.assume_positivity,
                     "allow weights that need target-arm positivity");

  std::string ic_panel, ic_schema;
  auto* ingest = app.add_subcommand("ingest-check", "validate a panel CSV against a schema");
  ingest->add_option("--panel", ic_panel)->required();
  ingest->add_option("--schema", ic_schema)->required();

  SimulateArgs simargs;
  auto* simulate = app.add_subcommand("simulate", "draw a synthetic benchmark panel");
  simulate->add_option("--n", simargs.n, "sample size");
  simulate->add_option("--floor", simargs.floor, "propensity floor (0 keeps exact violations)");

  OracleArgs oargs;
  auto* oracle = app.add_subcommand("oracle", "exact finite-state checks");
  oracle->add_option("--world", oargs.world_path, "world definition file")->required();
  oracle->add_option("--check", oargs.check, "wate|ident|sharp-null|all");
  oracle->add_option("--weight", oargs.weight, "restrict to one weight (default: catalog)");
  oracle->add_option("--regime", oargs.regime, "target regime for ident");
  oracle->add_option("--contrast", oargs.contrast, "regimes for sharp-null <bits>:<bits>");
  oracle->add_option("--draws", oargs.draws, "mechanism-simulation draws");
  oracle->add_option("--state-budget", oargs.state_budget, "max enumeration terms");

  std::string coverage_config;
  auto* coverage = app.add_subcommand("coverage", "synthetic-nuisance coverage grid");
  coverage->add_option("--config", coverage_config, "experiment config file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*estimate) return cmd_estimate(g, est);
    if (*ingest) return cmd_ingest_check(g, ic_panel, ic_schema);
    if (*simulate) return cmd_simulate(g, simargs);
    if (*oracle) return cmd_oracle(g, oargs);
    if (*coverage) return cmd_coverage(g, coverage_config);
  } catch (const flip::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

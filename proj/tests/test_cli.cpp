#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "flip/util/sha256.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd =
      std::string(FLIP_CLI_PATH) + " " + args + " >" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const char* f) const { return (path / f).string(); }
};

std::string data_file(const char* rel) {
  return std::string(FLIP_DATA_DIR) + "/" + rel;
}

}  // namespace

TEST_CASE("simulate is byte-reproducible for a fixed seed") {
  TempDir d1("flip_cli_sim1"), d2("flip_cli_sim2"), d3("flip_cli_sim3");
  CHECK(run_cli("--seed 1 --out-dir " + d1.path.string() + " simulate --n 500",
                d1 / "log") == 0);
  CHECK(run_cli("--seed 1 --out-dir " + d2.path.string() + " simulate --n 500",
                d2 / "log") == 0);
  CHECK(run_cli("--seed 2 --out-dir " + d3.path.string() + " simulate --n 500",
                d3 / "log") == 0);
  using flip::util::Sha256;
  const auto h1 = Sha256::of_file(d1 / "dgp_panel.csv");
  CHECK(h1 == Sha256::of_file(d2 / "dgp_panel.csv"));
  CHECK(h1 != Sha256::of_file(d3 / "dgp_panel.csv"));
  CHECK(fs::exists(d1.path / "manifest.txt"));
}

TEST_CASE("ingest-check accepts the simulated panel and rejects a broken one") {
  TempDir d("flip_cli_ingest");
  REQUIRE(run_cli("--seed 3 --out-dir " + d.path.string() + " simulate --n 50",
                  d / "log0") == 0);
  {
    std::ofstream schema(d / "panel.schema");
    schema << "covariates = x\n";
  }
  CHECK(run_cli("--out-dir " + d.path.string() + " ingest-check --panel " +
                    (d / "dgp_panel.csv") + " --schema " + (d / "panel.schema"),
                d / "log1") == 0);

  // Strip the outcome column: the loader must name it in the error.
  {
    std::ofstream bad(d / "bad.csv");
    bad << "id,t,a,x\n1,1,0,0.5\n1,2,1,0.6\n2,1,0,0.2\n2,2,1,0.3\n";
  }
  CHECK(run_cli("--out-dir " + d.path.string() + " ingest-check --panel " +
                    (d / "bad.csv") + " --schema " + (d / "panel.schema"),
                d / "log2") != 0);
  CHECK(slurp(d / "log2").find("'y'") != std::string::npos);
}

TEST_CASE("estimate writes a reproducible report with interval lines") {
  TempDir d("flip_cli_est");
  REQUIRE(run_cli("--seed 4 --out-dir " + d.path.string() + " simulate --n 400",
                  d / "log0") == 0);
  {
    std::ofstream schema(d / "panel.schema");
    schema << "covariates = x\n";
  }
  const std::string common =
      " estimate --panel " + (d / "dgp_panel.csv") + " --schema " +
      (d / "panel.schema") +
      " --weight smooth-trim:10 --backend logistic --folds 2";

  TempDir r1("flip_cli_est_r1"), r2("flip_cli_est_r2");
  CHECK(run_cli("--seed 7 --out-dir " + r1.path.string() + common +
                    " --regime 11 --estimator sdr",
                d / "log1") == 0);
  CHECK(run_cli("--seed 7 --out-dir " + r2.path.string() + common +
                    " --regime 11 --estimator sdr",
                d / "log2") == 0);
  using flip::util::Sha256;
  CHECK(Sha256::of_file(r1 / "report.txt") == Sha256::of_file(r2 / "report.txt"));
  CHECK(Sha256::of_file(r1 / "influence.csv") ==
        Sha256::of_file(r2 / "influence.csv"));
  const std::string report = slurp(r1 / "report.txt");
  CHECK(report.find("psi_hat = ") != std::string::npos);
  CHECK(report.find("ci_low = ") != std::string::npos);

  // Contrast mode emits the standardized ratio block.
  TempDir rc("flip_cli_est_rc");
  CHECK(run_cli("--seed 7 --out-dir " + rc.path.string() + common +
                    " --contrast 11:00 --estimator sdr",
                d / "log3") == 0);
  const std::string contrast = slurp(rc / "report.txt");
  CHECK(contrast.find("numerator = ") != std::string::npos);
  CHECK(contrast.find("delta_t_1 = ") != std::string::npos);
  CHECK(contrast.find("ratio_ci_high = ") != std::string::npos);

  // The diagnostic weighting estimator is flagged as non-robust.
  TempDir ri("flip_cli_est_ri");
  CHECK(run_cli("--seed 7 --out-dir " + ri.path.string() + common +
                    " --contrast 11:00 --estimator ipw",
                d / "log4") == 0);
  CHECK(slurp(ri / "report.txt").find("not robust") != std::string::npos);

  // Identification gate surfaces as a nonzero exit with a usable message.
  TempDir rf("flip_cli_est_rf");
  CHECK(run_cli("--seed 7 --out-dir " + rf.path.string() + " estimate --panel " +
                    (d / "dgp_panel.csv") + " --schema " + (d / "panel.schema") +
                    " --backend logistic --folds 2 --regime 11 --estimator sdr"
                    " --weight one",
                d / "log5") != 0);
  CHECK(slurp(d / "log5").find("assume-positivity") != std::string::npos);
}

TEST_CASE("oracle subcommand prints PASS lines for the bundled worlds") {
  TempDir d("flip_cli_oracle");
  CHECK(run_cli("--out-dir " + d.path.string() + " oracle --world " +
                    data_file("worlds/wate_a.world") + " --check wate",
                d / "log") == 0);
  const std::string log = slurp(d / "log");
  CHECK(log.find("PASS wate overlap") != std::string::npos);
  CHECK(log.find("FAIL") == std::string::npos);

  CHECK(run_cli("--seed 5 --out-dir " + d.path.string() + " oracle --world " +
                    data_file("worlds/ident_t2.world") +
                    " --check ident --weight smooth-trim:10 --draws 50000",
                d / "log2") == 0);
  CHECK(slurp(d / "log2").find("PASS ident") != std::string::npos);

  CHECK(run_cli("--out-dir " + d.path.string() + " oracle --world " +
                    data_file("worlds/inert_t2.world") +
                    " --check sharp-null --weight smooth-trim:10",
                d / "log3") == 0);
  CHECK(slurp(d / "log3").find("PASS sharp-null") != std::string::npos);
}

TEST_CASE("coverage subcommand writes the cell table") {
  TempDir d("flip_cli_cov");
  {
    std::ofstream cfg(d / "cov.cfg");
    cfg << "n = 300\nalpha_pi = 0.5\nalpha_m = 0.5\nreps = 4\n"
        << "weight = overlap\nestimator = sdr\nseed = 13\n";
  }
  CHECK(run_cli("--threads 2 --out-dir " + d.path.string() +
                    " coverage --config " + (d / "cov.cfg"),
                d / "log") == 0);
  const std::string cells = slurp(d / "coverage_cells.csv");
  CHECK(cells.find("alpha_pi,alpha_m,n,") != std::string::npos);
  CHECK(fs::exists(d.path / "coverage_long.csv"));
  CHECK(fs::exists(d.path / "manifest.txt"));
}

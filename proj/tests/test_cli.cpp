#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmbayes/cli.hpp"
#include "hmbayes/io.hpp"

using namespace hmb;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "hmbayes_test_cli";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small enough that a whole pipeline takes a few seconds.
const char* kTinyConfig = R"({
  "preset": "paper-desk",
  "truncation": {"realizations": 2, "responses": false},
  "mcmc": {"n_samples": 1, "warmup": 0},
  "summary": {"posterior_responses": 1, "prior_samples": 3}
})";

} // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"calibrate"}).code == kExitConfig);
  CHECK(run({"forward", "--bogus"}).code == kExitConfig);
  CHECK(run({"basis", "--preset", "paper-huge", "--out", (kRoot / "x").string()}).code == kExitConfig);
  const Result help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("pipeline") != std::string::npos);
}

TEST_CASE("invalid forward requests are configuration errors") {
  const fs::path dir = fresh("forward_bad");
  const fs::path out = dir / "run";
  const fs::path cfg = write_config(dir, R"({"random_field": {"kle_order": 121}})");
  CHECK(run({"forward", "--config", cfg.string(), "--out", out.string()}).code == kExitConfig);
  CHECK(run({"forward", "--xi", (dir / "missing.csv").string(), "--out", out.string()}).code == kExitConfig);
  CHECK(run({"forward", "--times", "500", "--out", out.string()}).code == kExitConfig);
}

TEST_CASE("forward run with the prior median") {
  const fs::path out = fresh("forward_ok") / "run";
  const Result r = run({"forward", "--preset", "paper-desk", "--times", "0", "50", "--out", out.string()});
  REQUIRE(r.code == kExitOk);
  int files = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    files += e.path().filename().string().rfind("trajectory_", 0) == 0 ? 1 : 0;
  }
  CHECK(files == 2);
  const CsvTable t = read_csv(out / "trajectory_50h.csv");
  CHECK(t.rows.size() == 80);
  CHECK(t.column("phi") == 4);
}

TEST_CASE("a Picard budget of one sweep is a numerical failure") {
  const fs::path dir = fresh("forward_diverge");
  const fs::path cfg = write_config(dir, R"({"solver": {"picard_max": 1, "picard_tol": 1e-15}})");
  const Result r = run({"forward", "--config", cfg.string(), "--out", (dir / "run").string()});
  CHECK(r.code == kExitNumerical);
  CHECK(r.err.find("Picard") != std::string::npos);
}

TEST_CASE("stages need their predecessors") {
  const fs::path out = fresh("no_basis") / "run";
  CHECK(run({"observe", "--out", out.string()}).code == kExitConfig);
  CHECK(run({"summarize", "--out", out.string()}).code == kExitConfig);
}

TEST_CASE("staged run, corrupted data and reproducibility") {
  const fs::path dir = fresh("staged");
  const fs::path cfg = write_config(dir, kTinyConfig);
  const std::string out = (dir / "run").string();
  REQUIRE(run({"basis", "--config", cfg.string(), "--out", out}).code == kExitOk);
  const std::string eig = slurp(dir / "run" / "eigenvectors.csv");
  const std::string trunc = slurp(dir / "run" / "truncation_error.csv");
  REQUIRE(run({"basis", "--config", cfg.string(), "--out", out}).code == kExitOk);
  CHECK(slurp(dir / "run" / "eigenvectors.csv") == eig);
  CHECK(slurp(dir / "run" / "truncation_error.csv") == trunc);

  REQUIRE(run({"observe", "--out", out}).code == kExitOk);
  const CsvTable obs = read_csv(dir / "run" / "observations.csv");
  CHECK(obs.rows.size() == 84);

  const fs::path cobs = dir / "run" / "cobs.csv";
  const std::string good = slurp(cobs);
  std::ofstream(cobs) << "c0,c1\n1,0\n0,1\n";
  CHECK(run({"infer", "--out", out}).code == kExitData);
  std::ofstream(cobs) << "c0,c1\n1,oops\n";
  CHECK(run({"infer", "--out", out}).code == kExitData);
  std::ofstream(cobs, std::ios::binary) << good;

  const fs::path other = write_config(dir / "run", R"({"preset": "paper-full"})");
  CHECK(run({"infer", "--config", other.string(), "--out", out}).code == kExitConfig);

  REQUIRE(run({"infer", "--out", out}).code == kExitOk);
  const CsvTable chain = read_csv(dir / "run" / "chain.csv");
  CHECK(chain.rows.size() == 1);
  CHECK(chain.columns() == 4 + 8 + 3);

  REQUIRE(run({"summarize", "--out", out}).code == kExitOk);
  const auto summary = read_json(dir / "run" / "summary.json");
  CHECK(summary["retained_samples"].get<int>() == 1);
  CHECK(summary["fields"].contains("lambda_0"));
  const auto manifest = read_json(dir / "run" / "manifest.json");
  CHECK(manifest["stages"].contains("summarize"));
}

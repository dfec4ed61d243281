#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hrg/errors.hpp"
#include "hrg/runner.hpp"

using namespace hrg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("hrg_test_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("check-conditions experiment writes the report") {
  auto out = fresh_dir("cond");
  std::string cfg = R"({
    "experiment": "check-conditions",
    "coupling": {"form": "polylog", "a": 1.0, "lambda": 2.0},
    "conditions": {"eta_bar": 0.05, "kappa": 0.1, "L": 6, "horizon": 300}
  })";
  run_experiment(cfg, out.string(), 1);
  auto body = slurp(out / "conditions.json");
  CHECK(body.find("\"condition1\"") != std::string::npos);
  CHECK(body.find("\"pass\": false") != std::string::npos);
  CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("invalid configs are rejected before any output") {
  auto out = fresh_dir("bad");
  CHECK_THROWS_AS(
      run_experiment(R"({"experiment":"flow","model":{"r":2,"kappa":-0.1},
        "coupling":{"form":"constant"},"temperatures":[1.0],"n_max":2})",
                     out.string(), 1),
      Error);
  CHECK_THROWS_AS(run_experiment("{not json", out.string(), 1), Error);
  CHECK_THROWS_AS(
      run_experiment(R"({"experiment":"flow","model":{"r":2,"kappa":0.1},
        "coupling":{"form":"constant"},"temperatures":[1.0],"n_max":2,
        "bogus_key":1})",
                     out.string(), 1),
      Error);
  CHECK_FALSE(fs::exists(out / "flow_summary.json"));
}

TEST_CASE("flow experiment: determinism of the CSV body") {
  std::string cfg = R"({
    "experiment": "flow",
    "model": {"r": 2, "kappa": 0.5, "eta": 0.1, "eta_bar": 0.05},
    "coupling": {"form": "constant"},
    "flow": {"quad_u": 48, "quad_rho": 32, "spp": 10},
    "temperatures": [5.0],
    "n_max": 25,
    "continue_past_high": 6
  })";
  auto out1 = fresh_dir("det1");
  auto out2 = fresh_dir("det2");
  run_experiment(cfg, out1.string(), 1);
  run_experiment(cfg, out2.string(), 2);  // thread count must not matter
  CHECK(slurp(out1 / "flow_T0.csv") == slurp(out2 / "flow_T0.csv"));
  CHECK(slurp(out1 / "flow_T0.csv").find("reached_high") == std::string::npos);
  auto summary = slurp(out1 / "flow_summary.json");
  CHECK(summary.find("reached_high") != std::string::npos);
}

TEST_CASE("fixed-point experiment emits g.csv and metadata") {
  auto out = fresh_dir("fp");
  std::string cfg = R"({
    "experiment": "fixed-point",
    "r": 2,
    "fixed_point": {"grid_n": 8192, "tol": 1e-11}
  })";
  run_experiment(cfg, out.string(), 1);
  auto meta = slurp(out / "fixed_point.json");
  CHECK(meta.find("cumulants") != std::string::npos);
  // kappa_2 ~ 0.25 appears in the metadata
  auto pos = meta.find("0.2500");
  CHECK(pos != std::string::npos);
  auto g = slurp(out / "g.csv");
  CHECK(g.rfind("t,g,pi\n", 0) == 0);
}

TEST_CASE("oracle experiment honors the seed override") {
  std::string cfg = R"({
    "experiment": "oracle",
    "model": {"r": 2, "kappa": 0.05, "T": 2.0},
    "coupling": {"form": "polylog", "a": 0.01, "lambda": 1.5},
    "oracle": {"n": 1, "sweeps": 60000, "seed": 5}
  })";
  auto out1 = fresh_dir("mc1");
  auto out2 = fresh_dir("mc2");
  auto out3 = fresh_dir("mc3");
  run_experiment(cfg, out1.string(), 1);
  run_experiment(cfg, out2.string(), 1);
  run_experiment(cfg, out3.string(), 1, 99);
  CHECK(slurp(out1 / "oracle_hist.csv") == slurp(out2 / "oracle_hist.csv"));
  CHECK(slurp(out1 / "oracle_hist.csv") != slurp(out3 / "oracle_hist.csv"));
  CHECK(slurp(out3 / "oracle.json").find("\"seed\": 99") != std::string::npos);
}

TEST_CASE("unknown experiment is a validation error") {
  CHECK_THROWS_AS(run_experiment(R"({"experiment":"dance"})",
                                 fresh_dir("x").string(), 1),
                  Error);
}

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "commands.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "graft");
  std::ostringstream out, err;
  const int code = graft::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("graft_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string small_config(const fs::path& out, const std::string& sampler) {
  return R"({
  "dataset": {"builtin": "two_gaussians", "n": 300, "dim": 6, "seed": 2, "split_seed": 2},
  "model": {"kind": "logistic"},
  "iterations": 40, "selection_period": 10, "batch_size": 16, "rank_set": [2, 4],
  "seed": 5, "sampler": ")" + sampler + R"(", "output_dir": ")" + out.string() + R"("
})";
}

}  // namespace

TEST_CASE("sample on the identity") {
  const fs::path dir = scratch("sample");
  write(dir / "id.csv", "1,0,0\n0,1,0\n0,0,1\n");
  const Result r = run_cli({"sample", "--input", (dir / "id.csv").string(), "--rank", "2"});
  CHECK(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["selection"]["indices"] == json::array({0, 1}));
  CHECK(j["truncated"] == false);
}

TEST_CASE("sample reports truncation with exit code 2") {
  const fs::path dir = scratch("trunc");
  write(dir / "low.csv", "x,y,z\n1,2,3\n2,4,6\n3,6,9\n");
  const Result r = run_cli({"sample", "--input", (dir / "low.csv").string(), "--rank", "2"});
  CHECK(r.code == 2);
  const json j = json::parse(r.out);
  CHECK(j["truncated"] == true);
  CHECK(j["selection"]["indices"].size() == 1);
}

TEST_CASE("sample on malformed CSV names the line") {
  const fs::path dir = scratch("bad");
  write(dir / "bad.csv", "1,2\n3,4\n5,oops\n");
  const Result r = run_cli({"sample", "--input", (dir / "bad.csv").string(), "--rank", "1"});
  CHECK(r.code == 1);
  CHECK(r.err.find(":3:") != std::string::npos);
}

TEST_CASE("sample brute force guard") {
  const fs::path dir = scratch("brute");
  std::ofstream f(dir / "big.csv");
  for (int i = 0; i < 200; ++i) f << (i % 7) << ',' << (i % 11) << ',' << (i * i % 13) << ',' << (i % 5 + i % 3) << '\n';
  f.close();
  const Result r = run_cli({"sample", "--input", (dir / "big.csv").string(), "--rank", "4", "--method", "brute"});
  CHECK(r.code == 1);
  CHECK(r.err.find("TooLarge") != std::string::npos);
}

TEST_CASE("sample compare on iris") {
  const Result r = run_cli({"sample", "--builtin", "iris", "--rank", "4", "--method", "compare"});
  CHECK(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["fast"]["indices"].size() == 4);
  CHECK(j["conventional"]["indices"].size() == 4);
  CHECK(j["subspace_similarity"].get<double>() == doctest::Approx(4.0));
}

TEST_CASE("sample with the variance extractor") {
  const Result r = run_cli({"sample", "--builtin", "iris", "--rank", "2", "--extractor", "variance"});
  CHECK(r.code == 0);
}

TEST_CASE("train writes artifacts and a summary line") {
  const fs::path dir = scratch("train");
  write(dir / "run.json", small_config(dir / "out", "graft"));
  const Result r = run_cli({"train", "--config", (dir / "run.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("final_acc=", 0) == 0);
  CHECK(r.out.find(" grad_evals=") != std::string::npos);
  CHECK(r.out.find(" kg_co2=") != std::string::npos);
  for (const char* f : {"trace.json", "alignment.csv", "class_hist.csv", "efficiency.csv", "summary.json"})
    CHECK(fs::exists(dir / "out" / f));

  const std::string first = read(dir / "out" / "trace.json");
  REQUIRE(run_cli({"train", "--config", (dir / "run.json").string()}).code == 0);
  CHECK(read(dir / "out" / "trace.json") == first);
}

TEST_CASE("full sampler evaluates T*K gradients") {
  const fs::path dir = scratch("full");
  write(dir / "run.json", small_config(dir / "out", "full"));
  const Result r = run_cli({"train", "--config", (dir / "run.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find(" grad_evals=640 ") != std::string::npos);
}

TEST_CASE("seed precedence: flag over environment over config") {
  const fs::path dir = scratch("seed");
  write(dir / "run.json", small_config(dir / "out", "graft"));
  const auto seed_of = [&] { return json::parse(read(dir / "out" / "summary.json"))["seed"].get<std::uint64_t>(); };

  ::unsetenv("GRAFT_SEED");
  REQUIRE(run_cli({"train", "--config", (dir / "run.json").string()}).code == 0);
  CHECK(seed_of() == 5);
  ::setenv("GRAFT_SEED", "17", 1);
  REQUIRE(run_cli({"train", "--config", (dir / "run.json").string()}).code == 0);
  CHECK(seed_of() == 17);
  REQUIRE(run_cli({"train", "--config", (dir / "run.json").string(), "--seed", "23"}).code == 0);
  CHECK(seed_of() == 23);
  ::setenv("GRAFT_SEED", "abc", 1);
  CHECK(run_cli({"train", "--config", (dir / "run.json").string()}).code == 1);
  ::unsetenv("GRAFT_SEED");
}

TEST_CASE("train rejects unknown keys and lists them") {
  const fs::path dir = scratch("schema");
  write(dir / "run.json", R"({"dataset": {"builtin": "iris", "colour": 1}, "iterationz": 5, "sampler": "best"})");
  const Result r = run_cli({"train", "--config", (dir / "run.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("dataset.colour") != std::string::npos);
  CHECK(r.err.find("iterationz") != std::string::npos);
  CHECK(r.err.find("sampler") != std::string::npos);
}

TEST_CASE("bundled config parses") {
  const fs::path p = fs::path(GRAFT_CONFIG_DIR) / "two_gaussians_graft.json";
  const graft::cli::RunConfigFile cfg = graft::cli::parse_run_config(read(p), p.parent_path());
  CHECK(cfg.train.iterations > 0);
  CHECK(cfg.metrics.full_reference);
}

TEST_CASE("bench output") {
  const Result r = run_cli({"bench", "--k", "64", "--rset", "4,8,16", "--trials", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("K,R,mean_ops,mean_wall_ns,conventional_wall_ns\n", 0) == 0);
  CHECK(r.out.find("# fitted_exponent=") != std::string::npos);

  const Result single = run_cli({"bench", "--k", "64", "--rset", "8", "--trials", "1"});
  CHECK(single.code == 0);
  CHECK(single.out.find("fitted_exponent") == std::string::npos);
  CHECK(std::count(single.out.begin(), single.out.end(), '\n') == 2);
}

TEST_CASE("fit-curve through a file") {
  const fs::path dir = scratch("fit");
  {
    std::ofstream f(dir / "eff.csv");
    f << "x,y\n";
    for (int i = 0; i < 10; ++i) {
      const double x = i;
      f << x << ',' << 0.2 + 0.7 * (1 - std::exp(-3.0 * x / 9.0)) << '\n';
    }
  }
  const Result r = run_cli({"fit-curve", "--input", (dir / "eff.csv").string()});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["lambda"].get<double>() == doctest::Approx(3.0).epsilon(0.01));
  CHECK(j["r_squared"].get<double>() >= 0.9999);

  write(dir / "short.csv", "x,y\n0,1\n1,2\n");
  CHECK(run_cli({"fit-curve", "--input", (dir / "short.csv").string()}).code == 1);
}

TEST_CASE("help lists defaults") {
  const Result r = run_cli({"bench", "--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("[256]") != std::string::npos);
  CHECK(r.out.find("--trials") != std::string::npos);
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"sample", "--rank", "2", "--method", "nope", "--builtin", "iris"}).code == 1);
}

TEST_CASE("exit codes by error class") {
  using graft::ErrorCode;
  using graft::cli::exit_code_for;
  CHECK(exit_code_for(ErrorCode::FitFailed) == graft::cli::kExitNumerical);
  CHECK(exit_code_for(ErrorCode::DivergedModel) == 3);
  CHECK(exit_code_for(ErrorCode::NonFinite) == 3);
  CHECK(exit_code_for(ErrorCode::SingularStart) == graft::cli::kExitDegraded);
  CHECK(exit_code_for(ErrorCode::Config) == graft::cli::kExitUser);
  CHECK(exit_code_for(ErrorCode::Io) == 1);
}

// End-to-end checks of the command-line driver: exit codes, report files,
// and byte-identical reruns. Spawns the real binary.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

const std::string kCli = HNLPU_CLI_PATH;
const std::string kScenarios = HNLPU_SCENARIO_DIR;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) {
    result.output.append(buf, n);
  }
  int status = pclose(pipe);
  result.exit_code = WEXITSTATUS(status);
  return result;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("verify: shipped toy scenario passes with exit 0") {
  auto r = run("verify --scenario " + kScenarios + "/toy_verify.json");
  CAPTURE(r.output);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS  distributed-equivalence") != std::string::npos);
  CHECK(r.output.find("PASS  bit-serial-exactness") != std::string::npos);
  CHECK(r.output.find("PASS  slice-budget") != std::string::npos);
  CHECK(r.output.find("FAIL") == std::string::npos);
}

TEST_CASE("verify: corrupted shard fails with nonzero exit") {
  auto r = run("verify --scenario " + kScenarios + "/toy_verify_fault.json");
  CAPTURE(r.output);
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("FAIL  distributed-equivalence") != std::string::npos);
}

TEST_CASE("verify: seed sweep produces identical verdict structure") {
  for (int seed = 0; seed < 4; ++seed) {
    auto r = run("verify --scenario " + kScenarios +
                 "/toy_verify.json --seed " + std::to_string(seed) +
                 " --format csv");
    CAPTURE(seed);
    CAPTURE(r.output);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("distributed-equivalence,1") != std::string::npos);
    CHECK(r.output.find("bit-serial-exactness,1") != std::string::npos);
    CHECK(r.output.find("slice-budget,1") != std::string::npos);
  }
}

TEST_CASE("simulate: decode scenario reports the calibrated throughput") {
  fs::path dir = fs::temp_directory_path() / "hnlpu_cli_sim";
  fs::remove_all(dir);
  auto r = run("simulate --scenario " + kScenarios +
               "/decode_throughput.json --out " + dir.string());
  CAPTURE(r.output);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("throughput 250000") != std::string::npos);
  CHECK(fs::exists(dir / "pipeline_report.csv"));
  CHECK(fs::exists(dir / "occupancy.csv"));
  CHECK(fs::exists(dir / "traces.csv"));
  const std::string traces = slurp(dir / "traces.csv");
  CHECK(traces.find("op,group,bytes_per_link,steps,time_ns") == 0);
  CHECK(traces.find("all_reduce,all") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("simulate: occupancy-1 latency is 0.864 ms") {
  auto r = run("simulate --scenario " + kScenarios +
               "/single_sequence_latency.json --format json");
  CAPTURE(r.output);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("\"occupancy_1_latency_s\": 0.000864") != std::string::npos);
  CHECK(r.output.find("\"mean_token_latency_s\": 0.000864") != std::string::npos);
}

TEST_CASE("simulate: empty workload exits 0 with a zero report") {
  auto r = run("simulate --scenario " + kScenarios + "/hnlpu_cost.json");
  CAPTURE(r.output);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("completed_tokens = 0") != std::string::npos);
}

TEST_CASE("cost: hnlpu vs h100 reproduces the efficiency rows") {
  auto r = run("cost --scenario " + kScenarios +
               "/hnlpu_cost.json --baseline " + kScenarios +
               "/h100_cluster.json");
  CAPTURE(r.output);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("Throughput / TCO (Static): 12.65x") != std::string::npos);
  CHECK(r.output.find("Throughput / TCO (Dynamic): 8.57x") != std::string::npos);
  CHECK(r.output.find("Throughput / CapEx: 11.58x") != std::string::npos);
  CHECK(r.output.find("Photomasks (Initial): 64.6 M$") != std::string::npos);
  CHECK(r.output.find("Photomasks (Re-spin): 36.9 M$") != std::string::npos);
  CHECK(r.output.find("Photomasks (Fully Heterogeneous): 480.0 M$") !=
        std::string::npos);
}

TEST_CASE("cost: naive full-mask estimate lands at six billion dollars") {
  auto r = run("cost --scenario " + kScenarios + "/naive_hardwiring.json");
  CAPTURE(r.output);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("Photomasks (Fully Heterogeneous): 6000.1 M$") !=
        std::string::npos);
}

TEST_CASE("cost: missing cost section is a configuration error") {
  auto r = run("cost --scenario " + kScenarios + "/toy_verify.json");
  CHECK(r.exit_code == 2);
}

TEST_CASE("unknown scenario keys exit with the configuration code") {
  fs::path bad = fs::temp_directory_path() / "hnlpu_bad_scenario.json";
  {
    std::ofstream os(bad);
    os << R"({"model": {"hidden": 16, "bogus": 3}})";
  }
  auto r = run("verify --scenario " + bad.string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("bogus") != std::string::npos);
  fs::remove(bad);
}

TEST_CASE("compare: orderings hold for the shipped operating point") {
  auto r = run("compare --scenario " + kScenarios + "/methodology.json");
  CAPTURE(r.output);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS  orderings") != std::string::npos);
}

TEST_CASE("identical scenario and seed give byte-identical reports") {
  fs::path a = fs::temp_directory_path() / "hnlpu_cli_a";
  fs::path b = fs::temp_directory_path() / "hnlpu_cli_b";
  fs::remove_all(a);
  fs::remove_all(b);
  auto ra = run("verify --scenario " + kScenarios +
                "/toy_verify.json --format json --out " + a.string());
  auto rb = run("verify --scenario " + kScenarios +
                "/toy_verify.json --format json --out " + b.string());
  CHECK(ra.exit_code == 0);
  CHECK(ra.output == rb.output);
  CHECK(slurp(a / "verify_report.json") == slurp(b / "verify_report.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

}  // TEST_SUITE

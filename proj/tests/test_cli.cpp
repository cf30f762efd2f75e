#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string cli_path() { return MFRDE_CLI_PATH; }

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("mfrde_cli_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& content) {
    std::ofstream os(p);
    os << content;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

const char* kZeroFieldConfig = R"({
  "experiment": "frozen",
  "driver": {"kind": "brownian", "dimension": 1},
  "grid": {"T": 1.0, "points": 9},
  "ensemble": {"M": 3, "seed": 7},
  "field": {"name": "constant", "params": {"value": 0.0}},
  "solver": {"X0": {"kind": "constant", "value": 2.5}},
  "outputs": ["trajectories"]
})";

const char* kChenConfig = R"({
  "experiment": "chen",
  "driver": {"kind": "brownian", "dimension": 2},
  "grid": {"T": 1.0, "points": 12},
  "ensemble": {"M": 8, "seed": 3},
  "field": {"name": "mean"},
  "outputs": ["chen"]
})";

}  // namespace

TEST_CASE("zero field produces frozen trajectories") {
    fs::path dir = fresh_dir("frozen");
    write(dir / "cfg.json", kZeroFieldConfig);
    REQUIRE(run_cli("run " + (dir / "cfg.json").string() + " --out-dir " + dir.string()) == 0);

    std::ifstream is(dir / "frozen_trajectories.csv");
    std::string line;
    std::getline(is, line);  // parameter header
    CHECK(line.rfind("# experiment=frozen", 0) == 0);
    std::getline(is, line);  // column header
    CHECK(line == "particle,time,x0");
    int rows = 0;
    while (std::getline(is, line)) {
        CHECK(line.substr(line.rfind(',') + 1) == "2.5");
        ++rows;
    }
    CHECK(rows == 3 * 9);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    fs::path a = fresh_dir("det_a");
    fs::path b = fresh_dir("det_b");
    write(a / "cfg.json", kChenConfig);
    write(b / "cfg.json", kChenConfig);
    REQUIRE(run_cli("run " + (a / "cfg.json").string() + " --out-dir " + a.string()) == 0);
    REQUIRE(run_cli("run " + (b / "cfg.json").string() + " --out-dir " + b.string()) == 0);
    CHECK(slurp(a / "chen_chen.csv") == slurp(b / "chen_chen.csv"));
    CHECK(slurp(a / "chen_summary.json") == slurp(b / "chen_summary.json"));
}

TEST_CASE("seed override perturbs the run") {
    fs::path dir = fresh_dir("seed");
    write(dir / "cfg.json", kChenConfig);
    REQUIRE(run_cli("run " + (dir / "cfg.json").string() + " --out-dir " + dir.string()) == 0);
    const std::string base = slurp(dir / "chen_chen.csv");
    REQUIRE(run_cli("run " + (dir / "cfg.json").string() + " --out-dir " + dir.string() +
                    " --seed 99") == 0);
    CHECK(slurp(dir / "chen_chen.csv") != base);
}

TEST_CASE("summary records the chen residual check") {
    fs::path dir = fresh_dir("summary");
    write(dir / "cfg.json", kChenConfig);
    REQUIRE(run_cli("run " + (dir / "cfg.json").string() + " --out-dir " + dir.string()) == 0);
    const std::string summary = slurp(dir / "chen_summary.json");
    CHECK(summary.find("chen-max-residual") != std::string::npos);
    CHECK(summary.find("\"pass\": true") != std::string::npos);
}

TEST_CASE("config errors exit with diagnostics") {
    fs::path dir = fresh_dir("errors");
    SUBCASE("malformed json") {
        write(dir / "bad.json", "{ not json");
        CHECK(run_cli("run " + (dir / "bad.json").string() + " --out-dir " + dir.string()) == 2);
    }
    SUBCASE("unknown field name") {
        write(dir / "bad.json", R"({
          "experiment": "x",
          "driver": {"kind": "brownian"},
          "grid": {"T": 1.0, "points": 5},
          "ensemble": {"M": 2},
          "field": {"name": "no-such-field"}
        })");
        CHECK(run_cli("run " + (dir / "bad.json").string() + " --out-dir " + dir.string()) == 2);
    }
    SUBCASE("missing file") {
        CHECK(run_cli("run " + (dir / "absent.json").string()) == 2);
    }
    SUBCASE("invalid exponent range") {
        write(dir / "bad.json", R"({
          "experiment": "x",
          "driver": {"kind": "brownian"},
          "grid": {"T": 1.0, "points": 5},
          "ensemble": {"M": 2},
          "exponents": {"p": 3.4},
          "field": {"name": "mean"}
        })");
        CHECK(run_cli("run " + (dir / "bad.json").string() + " --out-dir " + dir.string()) != 0);
    }
}

TEST_CASE("builtin listing") {
    const std::string cmd = cli_path() + std::string(" --list-builtins");
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[256];
    while (fgets(buf, sizeof(buf), pipe)) out += buf;
    pclose(pipe);
    CHECK(out.find("g-of-mean") != std::string::npos);
    CHECK(out.find("conv-kernel") != std::string::npos);
}

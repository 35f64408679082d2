#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mzi/itf.hpp"

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

std::string binary() {
    const char* bin = std::getenv("MZI_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "MZI_BIN must point at the mzi executable");
    return bin;
}

RunResult run(const std::string& args) {
    const std::string cmd = binary() + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    std::array<char, 4096> buf;
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) result.out.append(buf.data(), n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/mzi_test_" + name;
    std::ofstream(path) << content;
    return path;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("validate: exit codes 0 / 1 / 2") {
    const std::string good = write_temp("good.itf", mzi::kNestedMziText);
    const RunResult ok = run("validate " + good);
    CHECK(ok.exit_code == 0);
    CHECK(contains(ok.out, "5 stages"));
    CHECK(contains(ok.out, "12 channels"));

    std::string broken = mzi::kNestedMziText;
    const size_t pos = broken.find("chan E: BS3.out2 -> BS4.in2\n");
    broken.erase(pos, std::string("chan E: BS3.out2 -> BS4.in2\n").size());
    const RunResult bad = run("validate " + write_temp("bad.itf", broken));
    CHECK(bad.exit_code == 1);

    CHECK(run("validate /nonexistent/file.itf").exit_code == 2);
}

TEST_CASE("simulate: detector table and probe conditioning") {
    const RunResult plain = run("simulate --out json");
    CHECK(plain.exit_code == 0);
    const auto doc = nlohmann::json::parse(plain.out);
    CHECK(doc["detectors"]["D1"].get<double>() == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(doc["detectors"]["D3"].get<double>() == doctest::Approx(0.50).epsilon(1e-10));
    CHECK(doc.contains("config_digest"));

    const RunResult wnull = run("simulate --probes w:B+C:0.1 --out json");
    CHECK(wnull.exit_code == 0);
    // Pr(D1, w=1) is exactly zero
    CHECK(contains(wnull.out, "\"detector\": \"D1\",\n      \"bits\": \"1\",\n      \"p\": 0\n"));

    const RunResult cond = run("simulate --probes b:B:0.1 --condition b=1 --out json");
    CHECK(cond.exit_code == 0);
    const auto cdoc = nlohmann::json::parse(cond.out);
    CHECK(cdoc["conditional"]["D1"].get<double>() == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(cdoc["conditional"]["D3"].get<double>() == doctest::Approx(0.50).epsilon(1e-10));

    CHECK(run("simulate --probes b:B:bad").exit_code == 1);
    CHECK(run("simulate --condition b=2").exit_code == 1);
}

TEST_CASE("mc: reproducible, worker-count independent CSV") {
    const std::string args = "mc --runs 20000 --seed 42 --probes a:A:0.1,b:B:0.1";
    const RunResult w1 = run(args + " --workers 1");
    const RunResult w2 = run(args + " --workers 2");
    const RunResult w8 = run(args + " --workers 8");
    CHECK(w1.exit_code == 0);
    CHECK(w1.out == w2.out);
    CHECK(w1.out == w8.out);
    CHECK(contains(w1.out, "detector,bits,count,frequency\n"));
    CHECK(contains(w1.out, "a=0;b=0"));
    CHECK(run(args + " --workers 1").out == w1.out);  // same config, same bytes

    const RunResult empty = run("mc --runs 0 --seed 1");
    CHECK(empty.exit_code == 0);
    CHECK(empty.out == "detector,bits,count,frequency\n");

    const RunResult wprobe = run("mc --runs 50000 --seed 7 --probes w:B+C:0.3");
    CHECK(contains(wprobe.out, "D1,w=1,0,0\n"));
}

TEST_CASE("histories: consistency reports and the single framework rule") {
    const RunResult good = run("histories --framework \"probe:{A,B+C}\" --given D1 --out json");
    CHECK(good.exit_code == 0);
    CHECK(contains(good.out, "\"consistent\": true"));
    CHECK(contains(good.out, "\"A\": 1"));

    const RunResult inconsistent = run("histories --framework \"probe:{A,B,C}\" --out json");
    CHECK(inconsistent.exit_code == 0);  // no probabilities demanded
    CHECK(contains(inconsistent.out, "\"consistent\": false"));
    CHECK(nlohmann::json::parse(inconsistent.out)["max_offdiag"].get<double>() ==
          doctest::Approx(0.125).epsilon(1e-10));

    const RunResult refused = run("histories --framework \"probe:{A,B,C}\" --given D1 --out json");
    CHECK(refused.exit_code == 3);

    const RunResult combine = run(
        "histories --framework \"probe:{A,B+C}\" --framework \"probe:{C,A+B}\" --combine f1 f2 "
        "--out json");
    CHECK(combine.exit_code == 3);
    CHECK(contains(combine.out, "single framework rule"));

    const RunResult conjoin = run(
        "histories --framework \"probe:{A,B+C}\" --framework \"probe:{C,A+B}\" "
        "--conjoin \"f1:{A}|D1 AND f2:{C}|D1\" --out json");
    CHECK(conjoin.exit_code == 3);
    CHECK(contains(conjoin.out, "refused"));

    const RunResult query = run(
        "histories --framework \"probe:{A,B+C}\" --query \"f1:{A}|D1\" --out json");
    CHECK(query.exit_code == 0);
    CHECK(contains(query.out, "\"probability\": 1"));

    CHECK(run("histories --out json").exit_code == 1);  // no framework
}

TEST_CASE("weak and compare") {
    const RunResult weak = run("weak --post D1 --out json");
    CHECK(weak.exit_code == 0);
    CHECK(contains(weak.out, "\"channel\": \"A\""));
    CHECK(contains(weak.out, "\"present_channels\""));

    const RunResult cmp =
        run("compare --post D1 --framework \"probe:{A,B+C}\" --out json");
    CHECK(cmp.exit_code == 0);
    CHECK(contains(cmp.out, "\"agree\": false"));
    CHECK(contains(cmp.out, "\"ch\": \"absent (via B+C)\""));

    // orthogonal post-selection: theta(BS1)=0 sends nothing to D1
    std::string dark = mzi::print_itf(
        mzi::with_parameter(mzi::default_nested_mzi(), "BS1", "theta", 0.0));
    const std::string path = write_temp("dark.itf", dark);
    CHECK(run("weak --post D1 --itf " + path).exit_code == 1);
}

TEST_CASE("config file and --output") {
    const std::string cfg = write_temp("sim.cfg", "[simulate]\nprobes=b:B:0.1\nout=json\n");
    const RunResult from_cfg = run("simulate --config " + cfg);
    CHECK(from_cfg.exit_code == 0);
    const auto doc = nlohmann::json::parse(from_cfg.out);
    CHECK(doc["outcomes"].size() == 6);  // 3 detectors x 2 bit patterns

    const std::string out_path = "/tmp/mzi_test_out.json";
    std::remove(out_path.c_str());
    const RunResult to_file = run("simulate --out json --output " + out_path);
    CHECK(to_file.exit_code == 0);
    CHECK(to_file.out.empty());
    std::ifstream in(out_path);
    REQUIRE(in.good());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(contains(content, "\"total_p\""));
}

TEST_CASE("scan: hits, misses, empty grids") {
    const RunResult hit = run(
        "scan --param BS1.theta=0.7853981633974483:0.7853981633974483:1 "
        "--framework \"probe:{A,B+C}\" --given D1 --target A --min-prob 0.999 --out json");
    CHECK(hit.exit_code == 0);
    CHECK(contains(hit.out, "\"evaluated\": 1"));
    CHECK(contains(hit.out, "\"prob\": 1"));

    const RunResult miss = run(
        "scan --param BS1.theta=0.7853981633974483:0.7853981633974483:1 "
        "--framework \"probe:{C,A+B}\" --given D1 --target C --min-prob 0.999 --out json");
    CHECK(miss.exit_code == 0);
    CHECK(contains(miss.out, "\"hits\": []"));

    const RunResult empty = run(
        "scan --param BS1.theta=0:1:0 --framework \"probe:{A,B+C}\" --out json");
    CHECK(empty.exit_code == 0);
    CHECK(contains(empty.out, "\"evaluated\": 0"));

    CHECK(run("scan --param BS1.theta=1:0:5 --framework \"probe:{A,B+C}\"").exit_code == 1);
    CHECK(run("scan --param BS1.theta=zz --framework \"probe:{A,B+C}\"").exit_code == 1);
}

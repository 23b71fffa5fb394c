#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

// Runs the installed CLI binary with the given arguments, capturing stdout
// (and stderr when merge_stderr is set).
RunResult run_cli(const std::string& args, bool merge_stderr = false) {
    std::string cmd = std::string(LOGATTN_CLI_PATH) + " " + args;
    cmd += merge_stderr ? " 2>&1" : " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) {
        r.output.append(buf, got);
    }
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        rows.push_back(std::move(fields));
    }
    return rows;
}

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("check passes at the default sizes") {
    const auto r = run_cli("check --n 32 --dk 8 --dv 8 --seed 0");
    CHECK(r.exit_code == 0);
    const json doc = json::parse(r.output);
    CHECK(doc.at("all_pass") == true);
    CHECK(doc.at("properties").size() >= 20);
    for (const auto& prop : doc.at("properties")) {
        INFO(prop.at("name").get<std::string>());
        CHECK(prop.at("pass") == true);
        CHECK(prop.at("max_error").get<double>() <=
              prop.at("tolerance").get<double>());
    }
}

TEST_CASE("check handles the single-token degenerate case") {
    const auto r = run_cli("check --n 1");
    CHECK(r.exit_code == 0);
    CHECK(json::parse(r.output).at("all_pass") == true);
}

TEST_CASE("check rejects an empty context") {
    const auto r = run_cli("check --n 0", /*merge_stderr=*/true);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("empty context") != std::string::npos);
}

TEST_CASE("check with an impossible tolerance reports property failure") {
    const auto r = run_cli("check --n 16 --tol 1e-30");
    CHECK(r.exit_code == 1);
    CHECK(json::parse(r.output).at("all_pass") == false);
}

TEST_CASE("identical seeds give byte-identical reports") {
    const fs::path a = temp_file("logattn_check_a.json");
    const fs::path b = temp_file("logattn_check_b.json");
    fs::remove(a);
    fs::remove(b);
    CHECK(run_cli("check --n 16 --seed 7 --out " + a.string()).exit_code == 0);
    CHECK(run_cli("check --n 16 --seed 7 --out " + b.string()).exit_code == 0);
    const std::string ja = slurp(a);
    CHECK(!ja.empty());
    CHECK(ja == slurp(b));
    fs::remove(a);
    fs::remove(b);
}

TEST_CASE("bench emits the documented CSV") {
    const auto r = run_cli("bench --n 128 --seed 1");
    CHECK(r.exit_code == 0);
    const auto rows = parse_csv(r.output);
    REQUIRE(rows.size() >= 2);
    REQUIRE(rows[0].size() == 4);
    CHECK(r.output.rfind("n,form,per_token_ns,state_bytes\n", 0) == 0);

    std::set<std::pair<std::string, std::string>> seen;
    std::set<std::string> forms;
    std::set<std::string> streaming_bytes;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 4);
        const std::string& n = rows[i][0];
        const std::string& form = rows[i][1];
        CHECK(std::stod(rows[i][2]) > 0.0);     // per_token_ns
        CHECK(std::stoull(rows[i][3]) > 0u);    // state_bytes
        CHECK(seen.insert({n, form}).second);   // one row per (n, form)
        forms.insert(form);
        if (form == "quadratic") CHECK(n == "128");
        if (form == "streaming") streaming_bytes.insert(rows[i][3]);
    }
    CHECK(forms == std::set<std::string>{"logspace", "quadratic", "streaming"});
    CHECK(streaming_bytes.size() == 1);  // constant state size across n
}

TEST_CASE("bench respects the form filter") {
    const auto r = run_cli("bench --form quadratic --n 256 --seed 1");
    CHECK(r.exit_code == 0);
    const auto rows = parse_csv(r.output);
    REQUIRE(rows.size() == 3);  // header + n=128 + n=256
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i][1] == "quadratic");
    }

    const auto bad = run_cli("bench --form fourier", /*merge_stderr=*/true);
    CHECK(bad.exit_code == 2);
}

TEST_CASE("stream-demo saves, resumes, and verifies") {
    const fs::path snap = temp_file("logattn_demo_state.bin");
    fs::remove(snap);

    const auto first = run_cli("stream-demo --n 8 --seed 3 " + snap.string());
    CHECK(first.exit_code == 0);
    const json fresh = json::parse(first.output);
    CHECK(fresh.at("resumed") == false);
    CHECK(fresh.at("tokens_before") == 8);
    CHECK(fresh.at("tokens_total") == 16);
    CHECK(fresh.at("roundtrip_bit_exact") == true);
    CHECK(fresh.at("max_abs_diff").get<double>() <= 1e-11);
    CHECK(fresh.at("pass") == true);
    CHECK(fs::exists(snap));

    const auto second = run_cli("stream-demo --n 8 --seed 3 " + snap.string());
    CHECK(second.exit_code == 0);
    const json resumed = json::parse(second.output);
    CHECK(resumed.at("resumed") == true);
    CHECK(resumed.at("tokens_before") == 8);
    CHECK(resumed.at("tokens_total") == 16);
    CHECK(resumed.at("pass") == true);

    const auto mismatched =
        run_cli("stream-demo --n 8 --dk 4 --seed 3 " + snap.string(),
                /*merge_stderr=*/true);
    CHECK(mismatched.exit_code == 2);

    fs::remove(snap);
}

TEST_CASE("stream-demo rejects a corrupt snapshot with exit 3") {
    const fs::path snap = temp_file("logattn_demo_corrupt.bin");
    {
        std::ofstream out(snap, std::ios::binary);
        out << "not a snapshot";
    }
    const auto r = run_cli("stream-demo --n 8 " + snap.string(),
                           /*merge_stderr=*/true);
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("error") != std::string::npos);
    fs::remove(snap);
}

TEST_CASE("unwritable report path exits 3") {
    const auto r = run_cli("check --n 4 --out /nonexistent-dir/report.json",
                           /*merge_stderr=*/true);
    CHECK(r.exit_code == 3);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run_cli("", true).exit_code == 2);          // missing subcommand
    CHECK(run_cli("frobnicate", true).exit_code == 2);
    CHECK(run_cli("check --no-such-flag", true).exit_code == 2);
    CHECK(run_cli("check --n notanumber", true).exit_code == 2);
    CHECK(run_cli("check --chunk 0", true).exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
}

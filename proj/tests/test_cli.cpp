// Subprocess-level checks of the command line tool: exit codes, report shape,
// determinism, and the emit mode. Invoked as: test_cli <binary> <specs-dir>.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    if (!ok) {
        std::cerr << "FAIL: " << what << "\n";
        ++failures;
    }
}

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& cmd) {
    RunResult r;
    FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t got = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: test_cli <binary> <specs-dir>\n";
        return 2;
    }
    const std::string bin = argv[1];
    const std::string specs = argv[2];
    const std::string tmp = std::filesystem::temp_directory_path().string();

    {
        const std::string report = tmp + "/cli_32.json";
        const RunResult r =
            run(bin + " analyze " + specs + "/sys_3_2.json --out " + report);
        check(r.exit_code == 0, "analyze exits 0 on the four-state system");
        nlohmann::json doc = nlohmann::json::parse(read_file(report), nullptr, false);
        check(!doc.is_discarded(), "report is valid JSON");
        check(doc["autonomous_count"] == 3, "three autonomous integrals for the four-state system");
        check(doc["independence_rank"] == 4, "full general integral for the four-state system");
        check(doc["solvability"]["solvable"] == true, "solvable flag set");
    }

    {
        const std::string report = tmp + "/cli_238.json";
        const RunResult r =
            run(bin + " verify " + specs + "/sys_2_38.json --out " + report);
        check(r.exit_code == 3, "verify exits 3 on the defective pair");
        nlohmann::json doc = nlohmann::json::parse(read_file(report), nullptr, false);
        check(doc["solvability"]["solvable"] == false, "defective pair flagged");
        check(doc["solvability"].contains("defect_witness"), "witness matrix attached");
        const auto& w = doc["solvability"]["defect_witness"];
        check(w[0][1][0] == -5.0 && w[2][1][0] == 5.0, "witness matches the rank-one field");
        check(doc["verification"].contains("path_independence_gap"),
              "gap measured for the defective pair");
        check(doc["verification"]["path_independence_gap"].get<double>() > 1e-3,
              "gap exceeds the defect threshold");
    }

    {
        const std::string spec = tmp + "/trivial.json";
        std::ofstream(spec) << R"({"kind":"ode","n":1,"m":1,"matrices":[[[0]]]})";
        const RunResult r = run(bin + " emit " + spec);
        check(r.exit_code == 0, "emit exits 0");
        check(r.out == "lin([1])\n", "emit prints the single kernel integral");
    }

    {
        const std::string r1 = tmp + "/cli_seed_a.json";
        const std::string r2 = tmp + "/cli_seed_b.json";
        run(bin + " verify " + specs + "/sys_2_3.json --seed 5 --trajectories 4 --out " + r1);
        run(bin + " verify " + specs + "/sys_2_3.json --seed 5 --trajectories 4 --out " + r2);
        check(read_file(r1) == read_file(r2), "same seed gives byte-identical reports");
        check(!read_file(r1).empty(), "report written");
        const std::string r3 = tmp + "/cli_seed_c.json";
        run("FIRSTINT_THREADS=4 " + bin + " verify " + specs +
            "/sys_2_3.json --seed 5 --trajectories 4 --out " + r3);
        check(read_file(r1) == read_file(r3), "thread budget does not change the report");
    }

    {
        const RunResult r =
            run(bin + " analyze " + specs + "/sys_2_38.json --require-solvable --out " + tmp +
                "/req.json");
        check(r.exit_code == 3, "analyze --require-solvable exits 3 on the defective pair");
        check(run(bin + " analyze " + specs + "/sys_2_38.json --out " + tmp + "/noreq.json")
                      .exit_code == 0,
              "plain analyze reports the defective pair without failing");
    }

    {
        const RunResult r = run(bin + " analyze " + tmp + "/does_not_exist.json");
        check(r.exit_code == 2, "missing input exits 2");
        const std::string bad = tmp + "/bad.json";
        std::ofstream(bad) << "{";
        check(run(bin + " analyze " + bad).exit_code == 2, "malformed input exits 2");
    }

    // every shipped example round-trips through analyze
    for (const auto& entry : std::filesystem::directory_iterator(specs)) {
        if (entry.path().extension() != ".json") continue;
        const RunResult r = run(bin + " analyze " + entry.path().string() + " --out " + tmp +
                                "/roundtrip.json");
        const bool defective = entry.path().stem() == "sys_2_38";
        check(r.exit_code == 0 || defective,
              "analyze succeeds on " + entry.path().filename().string());
    }

    if (failures == 0) std::cout << "test_cli: all checks passed\n";
    return failures == 0 ? 0 : 1;
}

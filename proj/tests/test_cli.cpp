// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line binary: exit codes, stdout stability,
// and the machine-readable output files.

#include <catch2/catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr interleaved
};

RunResult run_cli(const std::string& args, const std::string& env = {}) {
    const std::string cmd = (env.empty() ? std::string{} : env + " ") +
                            std::string(FMOPERF_CLI_BIN) + " " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0)
        r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("fmoperf_test_" + name);
}

nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return nlohmann::json::parse(in);
}

} // namespace

TEST_CASE("predict reports the peta-regime numbers") {
    const auto out = temp_file("predict.json");
    const RunResult r = run_cli("predict --nf 100000 --im 17 --machine peta-2007 "
                                "--output " +
                                out.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("elapsed:") != std::string::npos);

    const nlohmann::json j = read_json(out);
    REQUIRE(j.at("n_d").get<long long>() == 750000);
    REQUIRE(j.at("n_es").get<long long>() == 4999200000LL);
    REQUIRE(j.at("elapsed_seconds").get<double>() ==
            Catch::Approx(18871.198).epsilon(1e-6));
    REQUIRE(j.at("pair_array_bytes").get<unsigned long long>() == 40000000000ULL);
    REQUIRE(j.at("effective_flops").get<double>() == 5.0e14);
    std::filesystem::remove(out);
}

TEST_CASE("predict handles the degenerate single-fragment input") {
    const auto out = temp_file("predict1.json");
    const RunResult r = run_cli("predict --nf 1 --output " + out.string());
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = read_json(out);
    REQUIRE(j.at("n_d").get<long long>() == 0);
    REQUIRE(j.at("n_es").get<long long>() == 0);
    REQUIRE(j.at("work").at("f_d").get<double>() == 0.0);
    std::filesystem::remove(out);
}

TEST_CASE("unknown presets exit with code 4") {
    const RunResult r = run_cli("predict --nf 10 --machine nonesuch");
    REQUIRE(r.exit_code == 4);
    REQUIRE(r.output.find("nonesuch") != std::string::npos);
}

TEST_CASE("missing required flags exit with code 4") {
    const RunResult r = run_cli("predict");
    REQUIRE(r.exit_code == 4);
}

TEST_CASE("calibrate on the bundled dataset recovers the published fit") {
    const auto out = temp_file("calib.json");
    const RunResult r = run_cli("calibrate --output " + out.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("objective:") != std::string::npos);

    const nlohmann::json j = read_json(out);
    const auto& p = j.at("params");
    REQUIRE(p.at("f_m0").get<double>() == Catch::Approx(0.59).epsilon(0.20));
    REQUIRE(p.at("f_d0").get<double>() == Catch::Approx(2.83).epsilon(0.20));
    REQUIRE(p.at("f_es0").get<double>() == Catch::Approx(0.082).epsilon(0.20));
    REQUIRE(j.at("efficiencies").at("xeon").get<double>() ==
            Catch::Approx(0.071).epsilon(0.20));
    REQUIRE(j.at("efficiencies").at("ibm").get<double>() == 1.0);
    std::filesystem::remove(out);
}

TEST_CASE("calibrate accepts a records file and the result feeds predict") {
    const auto csv = temp_file("records.csv");
    {
        std::ofstream f(csv);
        f << "machine_id,k,n_f,i_m,n_d,n_es,t_monomer,t_scf_dimer,t_es_dimer,t_total\n"
          << "ibm,1,106,17,690,4875,1356,2037,398,3799\n"
          << "ibm,1,561,17,4192,152888,13364,20689,13772,47886\n"
          << "ibm,1,1122,17,8416,620465,40005,70465,55955,166601\n";
    }
    const auto fit = temp_file("fit.json");
    const RunResult r =
        run_cli("calibrate --records " + csv.string() + " --output " + fit.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);

    const RunResult p =
        run_cli("predict --nf 1122 --im 17 --params-file " + fit.string());
    REQUIRE(p.exit_code == 0);
    REQUIRE(p.output.find("elapsed:") != std::string::npos);
    std::filesystem::remove(csv);
    std::filesystem::remove(fit);
}

TEST_CASE("malformed CSV exits with code 2 and the offending line") {
    const auto csv = temp_file("bad.csv");
    {
        std::ofstream f(csv);
        f << "machine_id,k,n_f,i_m,n_d,n_es,t_monomer,t_scf_dimer,t_es_dimer,t_total\n"
          << "ibm,1,106\n";
    }
    const RunResult r = run_cli("calibrate --records " + csv.string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.output.find("line 2") != std::string::npos);
    std::filesystem::remove(csv);
}

TEST_CASE("single-size records exit with the identifiability code") {
    const auto csv = temp_file("underdetermined.csv");
    {
        std::ofstream f(csv);
        f << "machine_id,k,n_f,i_m,n_d,n_es,t_monomer,t_scf_dimer,t_es_dimer,t_total\n"
          << "ibm,1,106,17,690,4875,1356,2037,398,3799\n"
          << "xeon,16,106,17,690,4875,1030.4,1677.4,293.1,3003.5\n";
    }
    const RunResult r = run_cli("calibrate --records " + csv.string());
    REQUIRE(r.exit_code == 3);
    std::filesystem::remove(csv);
}

TEST_CASE("simulate reproduces the workflow overhead ratio") {
    const RunResult r = run_cli("simulate --workflow lc-fmo-1cew");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("makespan: 12461") != std::string::npos);
    REQUIRE(r.output.find("overhead ratio") != std::string::npos);
}

TEST_CASE("workflow DAG cycles exit with code 5") {
    const auto wf = temp_file("cycle.json");
    {
        std::ofstream f(wf);
        f << R"({"label":"cycle","modules":[
                 {"name":"a","body":1.0},{"name":"b","body":1.0}],
                 "edges":[["a","b"],["b","a"]]})";
    }
    const RunResult r = run_cli("simulate --workflow " + wf.string());
    REQUIRE(r.exit_code == 5);
    std::filesystem::remove(wf);
}

TEST_CASE("simulate emits a deterministic event log") {
    const auto ev1 = temp_file("events1.csv");
    const auto ev2 = temp_file("events2.csv");
    const std::string base = "simulate --nf 30 --im 2 --machine xeon-16 --jitter 0.2 "
                             "--seed 11 --events ";
    REQUIRE(run_cli(base + ev1.string()).exit_code == 0);
    REQUIRE(run_cli(base + ev2.string()).exit_code == 0);

    std::ifstream a(ev1), b(ev2);
    const std::string sa((std::istreambuf_iterator<char>(a)),
                         std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)),
                         std::istreambuf_iterator<char>());
    REQUIRE(sa == sb);
    REQUIRE(sa.rfind("time,worker,task,kind,event", 0) == 0);
    REQUIRE(sa.find("monomer-iter") != std::string::npos);
    std::filesystem::remove(ev1);
    std::filesystem::remove(ev2);
}

TEST_CASE("run-toy agrees with its oracle on the bundled fixtures") {
    const RunResult pair = run_cli("run-toy --preset demo-pair --oracle");
    INFO(pair.output);
    REQUIRE(pair.exit_code == 0);
    REQUIRE(pair.output.find("relative_error:") != std::string::npos);

    const auto out = temp_file("toy.json");
    const RunResult chain =
        run_cli("run-toy --preset demo-chain20 --oracle --output " + out.string());
    REQUIRE(chain.exit_code == 0);
    const nlohmann::json j = read_json(out);
    REQUIRE(j.at("oracle").at("relative_error").get<double>() < 1e-3);
    REQUIRE(j.at("converged").get<bool>());
    std::filesystem::remove(out);
}

TEST_CASE("run-toy reads a system file") {
    const RunResult r =
        run_cli(std::string("run-toy --system ") + FMOPERF_DATA_DIR +
                "/systems/demo_pair.json --oracle");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("converged: true") != std::string::npos);
}

TEST_CASE("forced non-convergence exits with code 6") {
    const RunResult r = run_cli("run-toy --preset demo-chain20 --max-iterations 1");
    REQUIRE(r.exit_code == 6);
    REQUIRE(r.output.find("did not converge") != std::string::npos);
}

TEST_CASE("sweep emits the documented CSV columns") {
    const RunResult r =
        run_cli("sweep --nf-min 1000 --nf-max 10000 --steps 4 --machine peta-2007");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.rfind("nf,f_m,f_d,f_es,f_total,t_predict,t_simulated", 0) == 0);

    // single-point sweep yields exactly one data row
    const RunResult one =
        run_cli("sweep --nf-min 5000 --nf-max 5000 --steps 1 --machine peta-2007");
    REQUIRE(one.exit_code == 0);
    int lines = 0;
    for (const char ch : one.output)
        if (ch == '\n')
            ++lines;
    REQUIRE(lines == 2); // header + one row
}

TEST_CASE("sweep row matches predict at the same fragment count") {
    const auto csvp = temp_file("sweep.csv");
    const RunResult s = run_cli("sweep --nf-min 100000 --nf-max 100000 --steps 1 "
                                "--machine peta-2007 --output " +
                                csvp.string());
    REQUIRE(s.exit_code == 0);

    std::ifstream in(csvp);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    REQUIRE(row.rfind("100000,", 0) == 0);

    // t_predict column equals the predict subcommand's elapsed time
    const auto out = temp_file("sweep_predict.json");
    REQUIRE(run_cli("predict --nf 100000 --machine peta-2007 --output " +
                    out.string())
                .exit_code == 0);
    const double elapsed = read_json(out).at("elapsed_seconds").get<double>();

    std::size_t pos = 0;
    for (int i = 0; i < 5; ++i)
        pos = row.find(',', pos) + 1;
    const double t_predict = std::stod(row.substr(pos));
    REQUIRE(t_predict == Catch::Approx(elapsed).epsilon(1e-12));
    std::filesystem::remove(csvp);
    std::filesystem::remove(out);
}

TEST_CASE("empty sweep ranges exit with code 4") {
    REQUIRE(run_cli("sweep --nf-min 100 --nf-max 10 --steps 3").exit_code == 4);
    REQUIRE(run_cli("sweep --nf-min 0 --nf-max 10 --steps 3").exit_code == 4);
}

TEST_CASE("csv report format flattens the prediction") {
    const auto out = temp_file("flat.csv");
    const RunResult r = run_cli("predict --nf 106 --format csv --output " +
                                out.string());
    REQUIRE(r.exit_code == 0);
    std::ifstream in(out);
    const std::string text((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    REQUIRE(text.rfind("key,value", 0) == 0);
    REQUIRE(text.find("work.f_total,") != std::string::npos);
    std::filesystem::remove(out);
}

TEST_CASE("preset directory override is honored") {
    const auto dir = std::filesystem::temp_directory_path() / "fmoperf_presets";
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "mymachine.json");
        f << R"({"k": 2, "e": 1.0, "ref_node_flops": 1e9})";
    }
    const RunResult r = run_cli("predict --nf 10 --machine mymachine --output " +
                                temp_file("ovr.json").string(),
                                "FMO_PETASIM_PRESET_DIR=" + dir.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const nlohmann::json j = read_json(temp_file("ovr.json"));
    REQUIRE(j.at("machine").at("k").get<long long>() == 2);
    std::filesystem::remove_all(dir);
    std::filesystem::remove(temp_file("ovr.json"));
}

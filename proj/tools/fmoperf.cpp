// SPDX-License-Identifier: Apache-2.0
//
// fmoperf command-line front end.
//
// Subcommands: calibrate, predict, simulate, run-toy, sweep. Human-readable
// summaries go to stdout; machine-readable reports go to --output (JSON, or
// flattened key,value CSV with --format csv). The sweep table is CSV by nature
// and falls back to stdout when no --output is given.
//
// Exit codes: 0 success, 2 parse error, 3 identifiability error, 4 bad
// arguments/preset/input values, 5 invalid workflow DAG, 6 engine non-convergence,
// 1 unexpected internal error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fmoperf/fmoperf.hpp"

namespace {

struct OutputOptions {
    std::string path;
    std::string format = "json";
    std::uint64_t seed = 0;
};

void add_output_options(CLI::App* cmd, OutputOptions& out) {
    cmd->add_option("--output", out.path, "Write the machine-readable report here");
    cmd->add_option("--format", out.format, "Report format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--seed", out.seed, "Seed for stochastic options (default 0)");
}

// Flattens a JSON document to key,value lines with dotted paths, so --format csv
// works uniformly for every report shape.
void flatten_json(const nlohmann::json& j, const std::string& prefix,
                  std::ostream& out) {
    if (j.is_object()) {
        for (const auto& [key, value] : j.items())
            flatten_json(value, prefix.empty() ? key : prefix + "." + key, out);
    } else if (j.is_array()) {
        std::size_t i = 0;
        for (const auto& value : j)
            flatten_json(value, prefix + "[" + std::to_string(i++) + "]", out);
    } else {
        out << prefix << ',' << j.dump() << '\n';
    }
}

void write_report(const nlohmann::json& report, const OutputOptions& out) {
    if (out.path.empty())
        return;
    std::ofstream f(out.path);
    if (!f)
        throw fmoperf::ValidationError("cannot write output file: " + out.path);
    if (out.format == "csv") {
        f << "key,value\n";
        flatten_json(report, "", f);
    } else {
        f << report.dump(2) << '\n';
    }
}

void write_text(const std::string& text, const std::string& path) {
    std::ofstream f(path);
    if (!f)
        throw fmoperf::ValidationError("cannot write output file: " + path);
    f << text;
}

bool looks_like_path(const std::string& s) {
    return s.find('/') != std::string::npos || s.find(".json") != std::string::npos ||
           std::filesystem::exists(s);
}

fmoperf::CostParameters load_params(const std::string& preset, const std::string& file) {
    if (!file.empty()) {
        const nlohmann::json j = fmoperf::detail::load_json_file(file);
        // Accept either a bare parameter object or a calibrate output file.
        return fmoperf::cost_parameters_from_json(j.contains("params") ? j.at("params")
                                                                       : j);
    }
    return fmoperf::cost_parameters_preset(preset);
}

fmoperf::MachineSpec load_machine(const std::string& preset, const std::string& file) {
    if (!file.empty())
        return fmoperf::machine_from_json(fmoperf::detail::load_json_file(file));
    return fmoperf::machine_preset(preset);
}

nlohmann::json calibration_to_json(const fmoperf::CalibrationResult& r) {
    nlohmann::json j;
    j["params"] = fmoperf::cost_parameters_to_json(r.params);
    j["efficiencies"] = r.efficiencies;
    j["reference"] = r.reference;
    j["objective"] = r.objective;
    j["rounds"] = r.rounds;
    j["residuals"] = nlohmann::json::array();
    for (const fmoperf::PhaseResiduals& p : r.residuals)
        j["residuals"].push_back({{"machine_id", p.machine_id},
                                  {"n_f", p.n_f},
                                  {"monomer", p.monomer},
                                  {"scf_dimer", p.scf_dimer},
                                  {"es_dimer", p.es_dimer}});
    return j;
}

int cmd_calibrate(const std::string& records_path, const std::string& dataset,
                  const std::string& reference, const OutputOptions& out) {
    std::vector<fmoperf::TimingRecord> records;
    if (!records_path.empty()) {
        std::ifstream in(records_path);
        if (!in)
            throw fmoperf::ValidationError("cannot open records file: " + records_path);
        records = fmoperf::records_from_csv(in);
    } else {
        records = fmoperf::timing_dataset_preset(dataset);
    }

    const fmoperf::CalibrationResult result = fmoperf::fit(records, reference);
    write_report(calibration_to_json(result), out);

    std::cout.precision(10);
    std::cout << "records: " << records.size() << "\n"
              << "rounds: " << result.rounds << "\n"
              << "objective: " << result.objective << "\n"
              << "params: f_m0=" << result.params.f_m0 << " f_m1=" << result.params.f_m1
              << " f_d0=" << result.params.f_d0 << " f_d1=" << result.params.f_d1
              << " f_es0=" << result.params.f_es0
              << " nd_slope=" << result.params.nd_slope << "\n";
    for (const auto& [machine, e] : result.efficiencies)
        std::cout << "efficiency: " << machine << "=" << e
                  << (machine == result.reference ? " (reference)" : "") << "\n";
    double worst = 0.0;
    for (const fmoperf::PhaseResiduals& p : result.residuals)
        worst = std::max({worst, std::abs(p.monomer), std::abs(p.scf_dimer),
                          std::abs(p.es_dimer)});
    std::cout << "max |phase residual|: " << worst << "\n";
    return 0;
}

int cmd_predict(std::int64_t nf, std::int64_t im, const std::string& params_preset,
                const std::string& params_file, const std::string& machine_preset_name,
                const std::string& machine_file, const OutputOptions& out) {
    if (nf < 1)
        throw fmoperf::ValidationError("predict: --nf must be >= 1");
    const fmoperf::CostParameters p = load_params(params_preset, params_file);
    const fmoperf::MachineSpec m = load_machine(machine_preset_name, machine_file);
    const fmoperf::WorkloadShape shape = fmoperf::shape_from_nf(nf, im, p);
    const fmoperf::WorkBreakdown work = fmoperf::work_total(shape, p);
    const double elapsed = fmoperf::predict_elapsed(shape, p, m);
    const std::uint64_t bytes = fmoperf::pair_array_bytes(nf);

    nlohmann::json report{{"n_f", shape.n_f},
                          {"i_m", shape.i_m},
                          {"n_d", shape.n_d},
                          {"n_es", shape.n_es},
                          {"work",
                           {{"f_m", work.f_m},
                            {"f_d", work.f_d},
                            {"f_es", work.f_es},
                            {"f_total", work.f_total}}},
                          {"machine", fmoperf::machine_to_json(m)},
                          {"elapsed_seconds", elapsed},
                          {"pair_array_bytes", bytes}};
    if (m.ref_node_flops)
        report["effective_flops"] = fmoperf::effective_flops(m);
    write_report(report, out);

    std::cout.precision(10);
    std::cout << "shape: n_f=" << shape.n_f << " i_m=" << shape.i_m
              << " n_d=" << shape.n_d << " n_es=" << shape.n_es << "\n"
              << "work: f_m=" << work.f_m << " f_d=" << work.f_d
              << " f_es=" << work.f_es << " f_total=" << work.f_total
              << " ref-node-s\n"
              << "machine: k=" << m.k << " e=" << m.e << "\n"
              << "elapsed: " << elapsed << " s\n";
    if (m.ref_node_flops)
        std::cout << "effective_flops: " << fmoperf::effective_flops(m) << "\n";
    std::cout << "pair_array_bytes: " << bytes << "\n";
    return 0;
}

struct SimulateArgs {
    std::string workflow;
    std::int64_t nf = 0;
    std::int64_t im = 17;
    std::int64_t nd = -1;
    std::int64_t nes = -1;
    std::string params_preset = "paper-tableIV";
    std::string params_file;
    std::string machine_preset_name = "ibm-p5-node";
    std::string machine_file;
    double dispatch_overhead = 0.0;
    std::string policy = "fifo";
    double jitter = 0.0;
    std::string events_path;
    double failure_probability = 0.0;
    int retry_limit = 0;
    double retry_penalty = 0.0;
};

int cmd_simulate(const SimulateArgs& a, const OutputOptions& out) {
    const fmoperf::MachineSpec m = load_machine(a.machine_preset_name, a.machine_file);
    const fmoperf::ClusterConfig cluster = fmoperf::cluster_from(m, a.dispatch_overhead);
    fmoperf::SimOptions opts;
    opts.policy = a.policy == "lpt" ? fmoperf::SchedulePolicy::Lpt
                                    : fmoperf::SchedulePolicy::Fifo;
    std::cout.precision(10);

    if (!a.workflow.empty()) {
        if (!a.events_path.empty())
            throw fmoperf::ValidationError("--events is only available in task mode");
        const fmoperf::WorkflowSpec w =
            looks_like_path(a.workflow)
                ? fmoperf::workflow_from_json(fmoperf::detail::load_json_file(a.workflow))
                : fmoperf::workflow_preset(a.workflow);
        fmoperf::FaultModel faults;
        faults.failure_probability = a.failure_probability;
        faults.retry_limit = a.retry_limit;
        faults.retry_penalty = a.retry_penalty;
        faults.seed = out.seed;
        const fmoperf::SimReport report = fmoperf::simulate_workflow(w, cluster, faults);

        // Overhead ratio against the same pipeline with free staging and startup.
        fmoperf::WorkflowSpec bare = w;
        for (fmoperf::WorkflowModule& mod : bare.modules)
            mod.startup = mod.stage_in = mod.stage_out = 0.0;
        const fmoperf::SimReport baseline =
            fmoperf::simulate_workflow(bare, cluster, fmoperf::FaultModel{});

        nlohmann::json j = fmoperf::sim_report_to_json(report);
        j["workflow"] = w.label;
        j["baseline_makespan"] = baseline.makespan;
        if (baseline.makespan > 0.0)
            j["overhead_ratio"] = report.makespan / baseline.makespan;
        write_report(j, out);

        std::cout << "workflow: " << w.label << "\n"
                  << "makespan: " << report.makespan << " s\n"
                  << "efficiency: " << report.efficiency << "\n"
                  << "retries: " << report.retries << "\n"
                  << "completed: " << (report.completed ? "true" : "false") << "\n";
        for (const fmoperf::ModuleStat& mod : report.modules)
            std::cout << "module: " << mod.name << " time=" << (mod.end - mod.start)
                      << " s attempts=" << mod.attempts
                      << (mod.completed ? "" : " FAILED") << "\n";
        if (baseline.makespan > 0.0)
            std::cout << "overhead ratio vs zero-overhead baseline: "
                      << report.makespan / baseline.makespan << "\n";
        return 0;
    }

    if (a.nf < 1)
        throw fmoperf::ValidationError("simulate: give --workflow or --nf >= 1");
    const fmoperf::CostParameters p = load_params(a.params_preset, a.params_file);
    fmoperf::WorkloadShape shape = fmoperf::shape_from_nf(a.nf, a.im, p);
    if (a.nd >= 0 || a.nes >= 0) {
        shape.n_d = a.nd >= 0 ? a.nd : shape.n_d;
        shape.n_es = a.nes >= 0 ? a.nes : shape.n_es;
        shape.validate();
    }
    fmoperf::JitterOptions jitter;
    jitter.amplitude = a.jitter;
    jitter.seed = out.seed;
    const fmoperf::TaskList tasks = fmoperf::build_tasks(shape, p, cluster, jitter);
    opts.record_timeline = !a.events_path.empty();
    const fmoperf::SimReport report = fmoperf::simulate(tasks, cluster, opts);

    nlohmann::json j = fmoperf::sim_report_to_json(report);
    j["shape"] = {{"n_f", shape.n_f}, {"i_m", shape.i_m}, {"n_d", shape.n_d},
                  {"n_es", shape.n_es}};
    write_report(j, out);
    if (!a.events_path.empty())
        write_text(fmoperf::events_to_csv(report.timeline), a.events_path);

    std::cout << "shape: n_f=" << shape.n_f << " i_m=" << shape.i_m
              << " n_d=" << shape.n_d << " n_es=" << shape.n_es << "\n"
              << "makespan: " << report.makespan << " s\n"
              << "ideal_time: " << report.ideal_time << " s\n"
              << "efficiency: " << report.efficiency << "\n";
    return 0;
}

int cmd_run_toy(const std::string& system_path, const std::string& system_preset_name,
                double threshold, const fmoperf::EngineConfig& cfg, bool with_oracle,
                const OutputOptions& out) {
    const fmoperf::FragmentSystem system =
        !system_path.empty() ? fmoperf::load_system(system_path)
                             : fmoperf::system_preset(system_preset_name);
    cfg.validate();
    const fmoperf::PairClassification cls = fmoperf::classify_pairs(system, threshold);
    const fmoperf::Fmo2Result result = fmoperf::fmo2_total_energy(system, cls, cfg);

    nlohmann::json report = fmoperf::run_report_json(result, system.label);
    report["n_f"] = system.fragment_count();
    report["threshold"] = threshold;
    report["n_d"] = cls.scf_pairs.size();
    report["n_es"] = cls.es_pairs.size();
    double rel_error = 0.0;
    if (with_oracle) {
        const double oracle = fmoperf::full_system_oracle(system, cfg);
        rel_error = std::abs(result.total_energy - oracle) /
                    std::max(std::abs(oracle), 1e-300);
        report["oracle"] = {{"energy", oracle}, {"relative_error", rel_error}};
    }
    write_report(report, out);

    std::cout.precision(10);
    std::cout << "system: " << system.label << " (" << system.fragment_count()
              << " fragments)\n"
              << "threshold: " << threshold << " (n_d=" << cls.scf_pairs.size()
              << " n_es=" << cls.es_pairs.size() << ")\n"
              << "converged: " << (result.monomer.converged ? "true" : "false") << " ("
              << result.monomer.iterations_used << " iterations)\n"
              << "total_energy: " << result.total_energy << "\n";
    if (with_oracle)
        std::cout << "oracle_energy: " << report["oracle"]["energy"].get<double>() << "\n"
                  << "relative_error: " << rel_error << "\n";
    if (!result.monomer.converged) {
        std::cerr << "error: monomer loop did not converge within "
                  << cfg.max_iterations << " iterations (last delta "
                  << result.monomer.last_delta << " > tol " << cfg.tol << ")\n";
        return 6;
    }
    return 0;
}

int cmd_sweep(std::int64_t nf_min, std::int64_t nf_max, int steps, bool linear,
              std::int64_t im, const std::string& params_preset,
              const std::string& params_file, const std::string& machine_preset_name,
              const std::string& machine_file, double dispatch_overhead,
              bool json_requested, const OutputOptions& out) {
    if (nf_min < 1 || nf_max < nf_min || steps < 1)
        throw fmoperf::ValidationError("sweep: need 1 <= nf-min <= nf-max and steps >= 1");
    const fmoperf::CostParameters p = load_params(params_preset, params_file);
    const fmoperf::MachineSpec m = load_machine(machine_preset_name, machine_file);

    // Grid points snap to even fragment counts: nd_slope * even is an integer for
    // the default 7.50 slope, keeping the pair-count law exactly linear and the
    // predicted curve exactly quadratic across the grid.
    std::vector<std::int64_t> nfs;
    for (int i = 0; i < steps; ++i) {
        double x;
        if (steps == 1) {
            x = static_cast<double>(nf_min);
        } else if (linear) {
            x = static_cast<double>(nf_min) +
                (static_cast<double>(nf_max) - static_cast<double>(nf_min)) * i /
                    (steps - 1);
        } else {
            x = std::exp(std::log(static_cast<double>(nf_min)) +
                         (std::log(static_cast<double>(nf_max)) -
                          std::log(static_cast<double>(nf_min))) *
                             i / (steps - 1));
        }
        const std::int64_t nf = std::max<std::int64_t>(2, 2 * std::llround(x / 2.0));
        if (nfs.empty() || nfs.back() != nf)
            nfs.push_back(nf);
    }

    const std::vector<fmoperf::SweepRow> rows =
        fmoperf::efficiency_sweep(nfs, im, p, m, dispatch_overhead);
    // the sweep table is CSV by nature; JSON only on an explicit --format json
    if (json_requested) {
        nlohmann::json j = nlohmann::json::array();
        for (const fmoperf::SweepRow& r : rows)
            j.push_back({{"n_f", r.n_f},
                         {"f_m", r.work.f_m},
                         {"f_d", r.work.f_d},
                         {"f_es", r.work.f_es},
                         {"f_total", r.work.f_total},
                         {"t_predict", r.t_predict},
                         {"t_simulated", r.t_simulated},
                         {"efficiency", r.efficiency}});
        if (!out.path.empty()) {
            std::ofstream f(out.path);
            if (!f)
                throw fmoperf::ValidationError("cannot write output file: " + out.path);
            f << j.dump(2) << '\n';
        } else {
            std::cout << j.dump(2) << '\n';
        }
    } else {
        const std::string csv = fmoperf::sweep_to_csv(rows);
        if (!out.path.empty())
            write_text(csv, out.path);
        else
            std::cout << csv;
    }
    if (!out.path.empty())
        std::cout << "rows: " << rows.size() << "\n";
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"fmoperf: performance toolkit for fragment-decomposed workloads"};
    app.require_subcommand(1);

    OutputOptions out;

    auto* calibrate = app.add_subcommand(
        "calibrate", "Fit cost parameters and machine efficiencies from timings");
    std::string records_path;
    std::string dataset = "paper-tables";
    std::string reference = "ibm";
    calibrate->add_option("--records", records_path, "Timing records CSV");
    calibrate->add_option("--dataset", dataset,
                          "Bundled timing dataset preset (default paper-tables)");
    calibrate->add_option("--reference", reference,
                          "Reference machine pinned at E=1 (default ibm)");
    add_output_options(calibrate, out);

    auto* predict =
        app.add_subcommand("predict", "Analytic work and elapsed-time prediction");
    std::int64_t nf = 0, im = 17;
    std::string params_preset = "paper-tableIV", params_file;
    std::string machine_name = "ibm-p5-node", machine_file;
    predict->add_option("--nf", nf, "Fragment count")->required();
    predict->add_option("--im", im, "Monomer loop count (default 17)");
    predict->add_option("--params", params_preset, "Cost-parameter preset");
    predict->add_option("--params-file", params_file, "Cost-parameter JSON file");
    predict->add_option("--machine", machine_name, "Machine preset");
    predict->add_option("--machine-file", machine_file, "Machine JSON file");
    add_output_options(predict, out);

    auto* simulate = app.add_subcommand(
        "simulate", "Discrete-event scheduling or workflow simulation");
    SimulateArgs sim;
    simulate->add_option("--workflow", sim.workflow, "Workflow preset name or JSON path");
    simulate->add_option("--nf", sim.nf, "Fragment count (task mode)");
    simulate->add_option("--im", sim.im, "Monomer loop count (default 17)");
    simulate->add_option("--nd", sim.nd, "Override SCF-dimer count");
    simulate->add_option("--nes", sim.nes, "Override ES-dimer count");
    simulate->add_option("--params", sim.params_preset, "Cost-parameter preset");
    simulate->add_option("--params-file", sim.params_file, "Cost-parameter JSON file");
    simulate->add_option("--machine", sim.machine_preset_name, "Machine preset");
    simulate->add_option("--machine-file", sim.machine_file, "Machine JSON file");
    simulate->add_option("--dispatch-overhead", sim.dispatch_overhead,
                         "Seconds added per task dispatch");
    simulate->add_option("--policy", sim.policy, "fifo (default) or lpt")
        ->check(CLI::IsMember({"fifo", "lpt"}));
    simulate->add_option("--jitter", sim.jitter,
                         "Relative task-duration jitter in [0,1), seeded by --seed");
    simulate->add_option("--events", sim.events_path, "Write event-log CSV here");
    simulate->add_option("--failure-probability", sim.failure_probability,
                         "Per-task failure probability (workflow mode)");
    simulate->add_option("--retry-limit", sim.retry_limit,
                         "Retries per module (workflow mode)");
    simulate->add_option("--retry-penalty", sim.retry_penalty,
                         "Seconds lost per retry (workflow mode)");
    add_output_options(simulate, out);

    auto* run_toy = app.add_subcommand("run-toy", "Run the surrogate FMO2 engine");
    std::string system_path, system_preset_name = "demo-pair";
    double threshold = 7.5;
    bool with_oracle = false;
    fmoperf::EngineConfig cfg;
    run_toy->add_option("--system", system_path, "Fragment system JSON path");
    run_toy->add_option("--preset", system_preset_name,
                        "Fragment system preset (default demo-pair)");
    run_toy->add_option("--threshold", threshold, "SCF/ES distance threshold, A");
    run_toy->add_option("--tol", cfg.tol, "SCC convergence tolerance");
    run_toy->add_option("--max-iterations", cfg.max_iterations, "SCC iteration cap");
    run_toy->add_option("--damping", cfg.damping, "SCC damping in (0,1]");
    run_toy->add_option("--sigma", cfg.sigma, "Shielded-kernel length, A");
    run_toy->add_option("--coulomb", cfg.coulomb_constant, "Coulomb constant");
    run_toy->add_flag("--oracle", with_oracle, "Compare against the dense oracle");
    add_output_options(run_toy, out);

    auto* sweep = app.add_subcommand("sweep", "Emit predicted vs simulated times over N_f");
    std::int64_t nf_min = 0, nf_max = 0, sweep_im = 17;
    int steps = 0;
    bool linear = false;
    std::string sweep_params = "paper-tableIV", sweep_params_file;
    std::string sweep_machine = "peta-2007", sweep_machine_file;
    double sweep_overhead = 0.0;
    sweep->add_option("--nf-min", nf_min, "Smallest fragment count")->required();
    sweep->add_option("--nf-max", nf_max, "Largest fragment count")->required();
    sweep->add_option("--steps", steps, "Grid points")->required();
    sweep->add_flag("--linear", linear, "Linear grid (default logarithmic)");
    sweep->add_option("--im", sweep_im, "Monomer loop count (default 17)");
    sweep->add_option("--params", sweep_params, "Cost-parameter preset");
    sweep->add_option("--params-file", sweep_params_file, "Cost-parameter JSON file");
    sweep->add_option("--machine", sweep_machine, "Machine preset (default peta-2007)");
    sweep->add_option("--machine-file", sweep_machine_file, "Machine JSON file");
    sweep->add_option("--dispatch-overhead", sweep_overhead, "Seconds per task dispatch");
    add_output_options(sweep, out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }

    if (calibrate->parsed())
        return cmd_calibrate(records_path, dataset, reference, out);
    if (predict->parsed())
        return cmd_predict(nf, im, params_preset, params_file, machine_name,
                           machine_file, out);
    if (simulate->parsed())
        return cmd_simulate(sim, out);
    if (run_toy->parsed())
        return cmd_run_toy(system_path, system_preset_name, threshold, cfg, with_oracle,
                           out);
    if (sweep->parsed())
        return cmd_sweep(nf_min, nf_max, steps, linear, sweep_im, sweep_params,
                         sweep_params_file, sweep_machine, sweep_machine_file,
                         sweep_overhead,
                         sweep->count("--format") > 0 && out.format == "json", out);
    return 4;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const fmoperf::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fmoperf::IdentifiabilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fmoperf::DagError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const fmoperf::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 6;
    } catch (const fmoperf::PresetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const fmoperf::SingularGeometryError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const fmoperf::CapacityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const fmoperf::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}

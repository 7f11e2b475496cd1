// SPDX-License-Identifier: Apache-2.0
//
// Execution cost model for fragment runs.
//
// Work is measured in reference-node-seconds: one unit is one second of compute on
// the reference node (E = 1), so fitted parameters are plain seconds-per-task
// coefficients and flops never enter the core model. The three phases are
//
//   F_m  = (f_m0 + f_m1*N_f) * N_f * I_m     self-consistent monomer loop
//   F_d  = (f_d0 + f_d1*N_f) * N_d           SCF-dimers
//   F_es = f_es0 * N_es                      ES-dimers
//
// and a machine with K nodes of relative speed E needs F_total / (K*E) seconds.
// N_d grows linearly with N_f for chain-like systems (nd_slope, default 7.50);
// N_es is the complement of N_d among all N_f(N_f-1)/2 pairs.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "fmoperf/errors.hpp"
#include "fmoperf/fragment_system.hpp"

namespace fmoperf {

struct CostParameters {
    double f_m0 = 0.0;
    double f_m1 = 0.0;
    double f_d0 = 0.0;
    double f_d1 = 0.0;
    double f_es0 = 0.0;
    double nd_slope = 7.50;

    void validate() const {
        for (double v : {f_m0, f_m1, f_d0, f_d1, f_es0, nd_slope})
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ValidationError("cost parameters must be finite and >= 0");
    }
};

struct MachineSpec {
    std::int64_t k = 1;
    double e = 1.0;
    std::optional<double> ref_node_flops;

    void validate() const {
        if (k < 1)
            throw ValidationError("machine: k must be >= 1");
        if (!(e > 0.0) || !std::isfinite(e))
            throw ValidationError("machine: e must be > 0");
        if (ref_node_flops && !(*ref_node_flops > 0.0))
            throw ValidationError("machine: ref_node_flops must be > 0");
    }
};

struct WorkBreakdown {
    double f_m = 0.0;
    double f_d = 0.0;
    double f_es = 0.0;
    double f_total = 0.0;
};

inline std::int64_t total_pairs(std::int64_t n_f) {
    if (n_f < 0)
        throw ValidationError("total_pairs: n_f must be >= 0");
    // n_f(n_f-1)/2 stays in int64 for any n_f the model accepts.
    if (n_f > 4'000'000'000LL)
        throw ValidationError("total_pairs: n_f too large");
    return n_f * (n_f - 1) / 2;
}

inline double work_monomer(const WorkloadShape& s, const CostParameters& p) {
    s.validate();
    const auto nf = static_cast<double>(s.n_f);
    return (p.f_m0 + p.f_m1 * nf) * nf * static_cast<double>(s.i_m);
}

inline double work_dimer(const WorkloadShape& s, const CostParameters& p) {
    s.validate();
    return (p.f_d0 + p.f_d1 * static_cast<double>(s.n_f)) * static_cast<double>(s.n_d);
}

inline double work_es(const WorkloadShape& s, const CostParameters& p) {
    s.validate();
    return p.f_es0 * static_cast<double>(s.n_es);
}

inline WorkBreakdown work_total(const WorkloadShape& s, const CostParameters& p) {
    WorkBreakdown w;
    w.f_m = work_monomer(s, p);
    w.f_d = work_dimer(s, p);
    w.f_es = work_es(s, p);
    w.f_total = w.f_m + w.f_d + w.f_es;
    return w;
}

/// SCF-dimer count predicted by the linear law, rounded to nearest.
inline std::int64_t nd_model(std::int64_t n_f, const CostParameters& p) {
    if (n_f < 0)
        throw ValidationError("nd_model: n_f must be >= 0");
    return std::llround(p.nd_slope * static_cast<double>(n_f));
}

/// ES-dimer count as the complement of nd_model among all pairs, floored at 0.
inline std::int64_t nes_model(std::int64_t n_f, const CostParameters& p) {
    const std::int64_t pairs = total_pairs(n_f);
    return std::max<std::int64_t>(0, pairs - nd_model(n_f, p));
}

/// Assembles a shape from the fitted pair-count laws. n_d is capped at the pair
/// total so n_d + n_es = n_f(n_f-1)/2 holds even for tiny n_f where the asymptotic
/// linear law overshoots.
inline WorkloadShape shape_from_nf(std::int64_t n_f, std::int64_t i_m,
                                   const CostParameters& p) {
    WorkloadShape s;
    s.n_f = n_f;
    s.i_m = i_m;
    const std::int64_t pairs = total_pairs(n_f);
    s.n_d = std::min(nd_model(n_f, p), pairs);
    s.n_es = pairs - s.n_d;
    s.validate();
    return s;
}

inline double predict_elapsed(const WorkloadShape& s, const CostParameters& p,
                              const MachineSpec& m) {
    m.validate();
    return work_total(s, p).f_total / (static_cast<double>(m.k) * m.e);
}

/// Aggregate machine throughput in flops; needs ref_node_flops on the machine.
inline double effective_flops(const MachineSpec& m, double achieved_fraction = 1.0) {
    m.validate();
    if (!m.ref_node_flops)
        throw ValidationError("effective_flops: machine has no ref_node_flops");
    return static_cast<double>(m.k) * m.e * *m.ref_node_flops * achieved_fraction;
}

/// Bytes of a dense double-precision pair array with symmetry (n_f^2/2 entries).
inline std::uint64_t pair_array_bytes(std::int64_t n_f) {
    if (n_f < 0)
        throw ValidationError("pair_array_bytes: n_f must be >= 0");
    if (n_f > 2'147'483'647LL)
        throw ValidationError("pair_array_bytes: n_f too large");
    const auto n = static_cast<std::uint64_t>(n_f);
    return 4 * n * n;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline nlohmann::json cost_parameters_to_json(const CostParameters& p) {
    return {{"f_m0", p.f_m0}, {"f_m1", p.f_m1}, {"f_d0", p.f_d0},
            {"f_d1", p.f_d1}, {"f_es0", p.f_es0}, {"nd_slope", p.nd_slope}};
}

inline CostParameters cost_parameters_from_json(const nlohmann::json& j) {
    CostParameters p;
    try {
        p.f_m0 = j.at("f_m0").get<double>();
        p.f_m1 = j.at("f_m1").get<double>();
        p.f_d0 = j.at("f_d0").get<double>();
        p.f_d1 = j.at("f_d1").get<double>();
        p.f_es0 = j.at("f_es0").get<double>();
        p.nd_slope = j.value("nd_slope", 7.50);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("cost parameters JSON: ") + e.what());
    }
    p.validate();
    return p;
}

inline nlohmann::json machine_to_json(const MachineSpec& m) {
    nlohmann::json j{{"k", m.k}, {"e", m.e}};
    if (m.ref_node_flops)
        j["ref_node_flops"] = *m.ref_node_flops;
    return j;
}

inline MachineSpec machine_from_json(const nlohmann::json& j) {
    MachineSpec m;
    try {
        m.k = j.at("k").get<std::int64_t>();
        m.e = j.at("e").get<double>();
        if (j.contains("ref_node_flops"))
            m.ref_node_flops = j.at("ref_node_flops").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("machine JSON: ") + e.what());
    }
    m.validate();
    return m;
}

} // namespace fmoperf

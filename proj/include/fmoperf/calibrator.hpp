// SPDX-License-Identifier: Apache-2.0
//
// Fits CostParameters and per-machine efficiencies to measured phase timings.
//
// The model time for record i and phase p is  work_p(shape_i) / (K_i * E_machine(i)),
// which is bilinear in (params, efficiencies). We minimize the sum of squared
// *relative* residuals (phase times span four orders of magnitude, so absolute
// residuals would let the largest system dominate) by alternating two exactly
// solvable steps:
//
//   params step:      with all E fixed, each phase's parameters solve a small
//                     weighted linear least-squares system in closed form;
//   efficiency step:  with params fixed, each non-reference machine's E solves
//                     min_E sum (a/E - 1)^2  =>  E = sum(a^2)/sum(a),
//                     a = work/(K * t).
//
// Both steps minimize the shared objective exactly, so it descends monotonically;
// the reference machine is pinned at E = 1 to fix the scale gauge (multiplying all
// E and dividing all params by one constant leaves every prediction unchanged).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fmoperf/cost_model.hpp"
#include "fmoperf/errors.hpp"

namespace fmoperf {

struct TimingRecord {
    std::string machine_id;
    std::int64_t k = 1;
    WorkloadShape shape;
    double t_monomer = 0.0;
    double t_scf_dimer = 0.0;
    double t_es_dimer = 0.0;
    double t_total = 0.0;

    void validate() const {
        if (machine_id.empty())
            throw ValidationError("timing record: empty machine_id");
        if (k < 1)
            throw ValidationError("timing record: k must be >= 1");
        shape.validate();
        for (double t : {t_monomer, t_scf_dimer, t_es_dimer, t_total})
            if (!(t > 0.0) || !std::isfinite(t))
                throw ValidationError("timing record: times must be finite and > 0");
        if (t_total < std::max({t_monomer, t_scf_dimer, t_es_dimer}))
            throw ValidationError("timing record: t_total below largest phase time");
    }
};

struct PhaseResiduals {
    std::string machine_id;
    std::int64_t n_f = 0;
    double monomer = 0.0;
    double scf_dimer = 0.0;
    double es_dimer = 0.0;
};

struct CalibrationResult {
    CostParameters params;
    std::map<std::string, double> efficiencies;
    std::string reference;
    std::vector<PhaseResiduals> residuals; // relative errors, (model - measured)/measured
    double objective = 0.0;
    int rounds = 0;
};

/// One line of residual_report: measured vs modeled for a single record and phase,
/// in three views: phase totals, per-task averages, and per-loop-unit averages
/// (for the monomer phase the loop unit is one fragment across all sweeps; for the
/// dimer phases the two normalizations coincide).
struct ResidualRow {
    std::string machine_id;
    std::int64_t n_f = 0;
    std::string phase;
    double measured = 0.0;
    double modeled = 0.0;
    double rel_error = 0.0;
    double measured_per_task = 0.0;
    double modeled_per_task = 0.0;
    double measured_per_unit = 0.0;
    double modeled_per_unit = 0.0;
};

namespace detail {

inline std::array<double, 3> phase_works(const WorkloadShape& s, const CostParameters& p) {
    return {work_monomer(s, p), work_dimer(s, p), work_es(s, p)};
}

inline std::array<double, 3> phase_times(const TimingRecord& r) {
    return {r.t_monomer, r.t_scf_dimer, r.t_es_dimer};
}

inline double calibration_objective(const std::vector<TimingRecord>& records,
                                    const CostParameters& p,
                                    const std::map<std::string, double>& eff) {
    double obj = 0.0;
    for (const TimingRecord& r : records) {
        const double ke = static_cast<double>(r.k) * eff.at(r.machine_id);
        const auto works = phase_works(r.shape, p);
        const auto times = phase_times(r);
        for (int q = 0; q < 3; ++q) {
            const double rel = (works[q] / ke - times[q]) / times[q];
            obj += rel * rel;
        }
    }
    return obj;
}

// Weighted zero-target LS for one affine phase: rows (a0 + a1*x) scaled by b must
// hit 1, i.e. minimize sum (b_i*(a0 + a1*x_i) - 1)^2 over (a0, a1).
struct AffineFitAccumulator {
    double s00 = 0, s01 = 0, s11 = 0, r0 = 0, r1 = 0;
    long n = 0;

    void add(double b, double x) {
        s00 += b * b;
        s01 += b * b * x;
        s11 += b * b * x * x;
        r0 += b;
        r1 += b * x;
        ++n;
    }

    std::pair<double, double> solve(const std::string& phase) const {
        const double det = s00 * s11 - s01 * s01;
        const double scale = std::max(s00 * s11, s01 * s01);
        if (n < 2 || !(det > 1e-12 * std::max(scale, 1e-300)))
            throw IdentifiabilityError("calibration: " + phase +
                                       " design is rank-deficient (need records at >= 2 "
                                       "distinct N_f with nonzero task counts)");
        return {(s11 * r0 - s01 * r1) / det, (s00 * r1 - s01 * r0) / det};
    }
};

} // namespace detail

/// Zero-intercept least-squares slope of N_d against N_f.
inline double fit_nd(const std::vector<TimingRecord>& records) {
    double sxx = 0.0, sxy = 0.0;
    for (const TimingRecord& r : records) {
        const auto nf = static_cast<double>(r.shape.n_f);
        sxx += nf * nf;
        sxy += nf * static_cast<double>(r.shape.n_d);
    }
    if (!(sxx > 0.0))
        throw ValidationError("fit_nd: no records with n_f > 0");
    return sxy / sxx;
}

inline CalibrationResult fit(const std::vector<TimingRecord>& records,
                             const std::string& reference) {
    if (records.empty())
        throw ValidationError("fit: no records");
    bool have_reference = false;
    std::map<std::string, double> eff;
    std::int64_t nf_min = records.front().shape.n_f, nf_max = nf_min;
    for (const TimingRecord& r : records) {
        r.validate();
        eff.emplace(r.machine_id, 1.0);
        have_reference = have_reference || r.machine_id == reference;
        nf_min = std::min(nf_min, r.shape.n_f);
        nf_max = std::max(nf_max, r.shape.n_f);
    }
    if (!have_reference)
        throw ValidationError("fit: reference machine '" + reference + "' not in records");
    if (nf_min == nf_max)
        throw IdentifiabilityError("fit: all records share one N_f; the affine phase "
                                   "laws are not identifiable");

    CostParameters p;
    std::optional<double> prev;
    int round = 0;
    const int max_rounds = 500;
    double obj = 0.0;
    for (round = 1; round <= max_rounds; ++round) {
        // Params step: three independent closed-form blocks.
        detail::AffineFitAccumulator mono, dim;
        double es_num = 0.0, es_den = 0.0;
        for (const TimingRecord& r : records) {
            const double c = 1.0 / (static_cast<double>(r.k) * eff.at(r.machine_id));
            const auto nf = static_cast<double>(r.shape.n_f);
            const auto im = static_cast<double>(r.shape.i_m);
            const auto nd = static_cast<double>(r.shape.n_d);
            const auto nes = static_cast<double>(r.shape.n_es);
            if (r.shape.n_f > 0 && r.shape.i_m > 0)
                mono.add(c * nf * im / r.t_monomer, nf);
            if (r.shape.n_d > 0)
                dim.add(c * nd / r.t_scf_dimer, nf);
            if (r.shape.n_es > 0) {
                const double b = c * nes / r.t_es_dimer;
                es_num += b;
                es_den += b * b;
            }
        }
        std::tie(p.f_m0, p.f_m1) = mono.solve("monomer");
        std::tie(p.f_d0, p.f_d1) = dim.solve("scf-dimer");
        if (!(es_den > 0.0))
            throw IdentifiabilityError("calibration: no records with ES-dimer tasks");
        p.f_es0 = es_num / es_den;

        // Efficiency step: closed form per non-reference machine.
        for (auto& [machine, e] : eff) {
            if (machine == reference)
                continue;
            double num = 0.0, den = 0.0;
            for (const TimingRecord& r : records) {
                if (r.machine_id != machine)
                    continue;
                const auto works = detail::phase_works(r.shape, p);
                const auto times = detail::phase_times(r);
                for (int q = 0; q < 3; ++q) {
                    const double a = works[q] / (static_cast<double>(r.k) * times[q]);
                    num += a * a;
                    den += a;
                }
            }
            if (den > 0.0)
                e = num / den;
        }

        obj = detail::calibration_objective(records, p, eff);
        if (prev) {
            if (obj > *prev * (1.0 + 1e-12) + 1e-300)
                throw NumericalError("fit: objective increased across an alternating "
                                     "round (should be impossible)");
            if (*prev - obj <= 1e-12 * std::max(*prev, 1e-300) || obj < 1e-28)
                break;
        }
        prev = obj;
    }
    if (round > max_rounds)
        throw ConvergenceError("fit: no convergence after " + std::to_string(max_rounds) +
                               " rounds (objective " + std::to_string(obj) + ")");

    CalibrationResult result;
    p.validate();
    result.params = p;
    result.params.nd_slope = fit_nd(records);
    result.efficiencies = eff;
    result.reference = reference;
    result.objective = obj;
    result.rounds = round;
    for (const TimingRecord& r : records) {
        const double ke = static_cast<double>(r.k) * eff.at(r.machine_id);
        const auto works = detail::phase_works(r.shape, p);
        const auto times = detail::phase_times(r);
        PhaseResiduals res;
        res.machine_id = r.machine_id;
        res.n_f = r.shape.n_f;
        res.monomer = (works[0] / ke - times[0]) / times[0];
        res.scf_dimer = (works[1] / ke - times[1]) / times[1];
        res.es_dimer = (works[2] / ke - times[2]) / times[2];
        result.residuals.push_back(std::move(res));
    }
    return result;
}

inline std::vector<ResidualRow> residual_report(const CalibrationResult& result,
                                                const std::vector<TimingRecord>& records) {
    std::vector<ResidualRow> rows;
    for (const TimingRecord& r : records) {
        const double ke =
            static_cast<double>(r.k) * result.efficiencies.at(r.machine_id);
        const auto works = detail::phase_works(r.shape, result.params);
        const double modeled_total = (works[0] + works[1] + works[2]) / ke;
        const std::array<double, 4> measured{r.t_monomer, r.t_scf_dimer, r.t_es_dimer,
                                             r.t_total};
        const std::array<double, 4> modeled{works[0] / ke, works[1] / ke, works[2] / ke,
                                            modeled_total};
        const std::array<const char*, 4> names{"monomer", "scf_dimer", "es_dimer", "total"};
        // Task counts per phase, then the loop-unit counts (monomer: fragments).
        const std::array<double, 4> tasks{
            static_cast<double>(r.shape.n_f) * static_cast<double>(r.shape.i_m),
            static_cast<double>(r.shape.n_d), static_cast<double>(r.shape.n_es), 0.0};
        const std::array<double, 4> units{static_cast<double>(r.shape.n_f),
                                          static_cast<double>(r.shape.n_d),
                                          static_cast<double>(r.shape.n_es), 0.0};
        for (int q = 0; q < 4; ++q) {
            ResidualRow row;
            row.machine_id = r.machine_id;
            row.n_f = r.shape.n_f;
            row.phase = names[q];
            row.measured = measured[q];
            row.modeled = modeled[q];
            row.rel_error = (modeled[q] - measured[q]) / measured[q];
            row.measured_per_task = tasks[q] > 0 ? measured[q] / tasks[q] : 0.0;
            row.modeled_per_task = tasks[q] > 0 ? modeled[q] / tasks[q] : 0.0;
            row.measured_per_unit = units[q] > 0 ? measured[q] / units[q] : 0.0;
            row.modeled_per_unit = units[q] > 0 ? modeled[q] / units[q] : 0.0;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// CSV ingest/emit
// ---------------------------------------------------------------------------

inline constexpr const char* timing_csv_header =
    "machine_id,k,n_f,i_m,n_d,n_es,t_monomer,t_scf_dimer,t_es_dimer,t_total";

/// Reads timing records from CSV. The header line must match timing_csv_header.
/// Blank lines and lines starting with '#' are skipped.
inline std::vector<TimingRecord> records_from_csv(std::istream& in) {
    std::vector<TimingRecord> records;
    std::string line;
    long line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line.front() == '#')
            continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ','))
            fields.push_back(field);
        if (!header_seen) {
            if (line != timing_csv_header)
                throw ParseError("timing CSV: bad header, expected '" +
                                     std::string(timing_csv_header) + "'",
                                 line_no);
            header_seen = true;
            continue;
        }
        if (fields.size() != 10)
            throw ParseError("timing CSV: expected 10 fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        TimingRecord r;
        try {
            std::size_t pos = 0;
            r.machine_id = fields[0];
            r.k = std::stoll(fields[1], &pos);
            r.shape.n_f = std::stoll(fields[2]);
            r.shape.i_m = std::stoll(fields[3]);
            r.shape.n_d = std::stoll(fields[4]);
            r.shape.n_es = std::stoll(fields[5]);
            r.t_monomer = std::stod(fields[6]);
            r.t_scf_dimer = std::stod(fields[7]);
            r.t_es_dimer = std::stod(fields[8]);
            r.t_total = std::stod(fields[9]);
        } catch (const std::exception&) {
            throw ParseError("timing CSV: malformed numeric field", line_no);
        }
        try {
            r.validate();
        } catch (const ValidationError& e) {
            throw ParseError(std::string("timing CSV: ") + e.what(), line_no);
        }
        records.push_back(std::move(r));
    }
    if (!header_seen)
        throw ParseError("timing CSV: empty input (no header)");
    return records;
}

inline std::string records_to_csv(const std::vector<TimingRecord>& records) {
    std::ostringstream out;
    out << timing_csv_header << '\n';
    out.precision(17);
    for (const TimingRecord& r : records)
        out << r.machine_id << ',' << r.k << ',' << r.shape.n_f << ',' << r.shape.i_m
            << ',' << r.shape.n_d << ',' << r.shape.n_es << ',' << r.t_monomer << ','
            << r.t_scf_dimer << ',' << r.t_es_dimer << ',' << r.t_total << '\n';
    return out.str();
}

} // namespace fmoperf

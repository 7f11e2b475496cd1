// SPDX-License-Identifier: Apache-2.0
//
// FMO2 control flow on a classical charge-equilibration surrogate.
//
// Each fragment I carries site charges q_I minimizing the convex quadratic
//
//   E_I(q; v) = 1/2 q^T (A_I + S_I) q + (chi_I + v)^T q,   subject to 1^T q = Q_I,
//
// where A_I is the fragment's hardness matrix, S_I the intra-fragment coupling
// built from the shielded kernel g(r) = kappa / sqrt(r^2 + sigma^2), chi_I the site
// electronegativities and v an external potential. Solved exactly via the KKT system.
//
// Two Coulomb kernels are used on purpose:
//   - shielded g(r): intra-fragment, intra-pair in SCF dimers, and everywhere in the
//     brute-force oracle (the "true" physics);
//   - bare kappa/r: the monomer-loop embedding potential and all ES-dimer terms
//     (the far-field approximation).
// Since g(r) - kappa/r = O(sigma^2/r^3), the mismatch vanishes with distance: far
// pairs are nearly exact, near pairs need the explicit SCF-dimer treatment. Without
// the mismatch the convex surrogate would make the fragment expansion exact and the
// approximation untestable.
//
// Embedded energies and the frozen-limit identity. With the convention
//
//   E'_X = internal(q_X) + sum over other fragments L of C_bare(q_X, q_L)
//
// (full, unhalved environment interaction), letting all charges sit frozen at the
// monomer values q*, the frozen dimer energy of pair (I,J) with bare intra-pair
// coupling is
//
//   E'_IJ = int_I + int_J + C_bare(I,J) + sum_{L != I,J} [C_bare(I,L) + C_bare(J,L)]
//
// and subtracting E'_I + E'_J (each of which contains C_bare(I,J) plus its own
// environment sum) cancels every environment term and one pair term:
//
//   E'_IJ - E'_I - E'_J = -C_bare(q_I*, q_J*).
//
// That is exactly what es_dimer_correction returns, and what solve_scf_dimer's
// frozen diagnostic mode must reproduce to machine precision.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmoperf/errors.hpp"
#include "fmoperf/fragment_system.hpp"

namespace fmoperf {

struct EngineConfig {
    double tol = 1e-8;        // max |charge change| per sweep, e
    int max_iterations = 200; // SCC sweep limit
    double damping = 0.7;     // q <- (1-d) q_old + d q_new
    double sigma = 1.0;       // shielding length of the short-range kernel, A
    double coulomb_constant = 1.0; // energy * A / e^2

    void validate() const {
        if (!(tol > 0.0))
            throw ValidationError("engine config: tol must be > 0");
        if (max_iterations < 1)
            throw ValidationError("engine config: max_iterations must be >= 1");
        if (!(damping > 0.0) || damping > 1.0)
            throw ValidationError("engine config: damping must be in (0, 1]");
        if (sigma < 0.0)
            throw ValidationError("engine config: sigma must be >= 0");
        if (!std::isfinite(coulomb_constant))
            throw ValidationError("engine config: coulomb_constant must be finite");
    }
};

/// Per-fragment charge vectors, aligned with each fragment's site order.
using ChargeState = std::vector<Eigen::VectorXd>;

struct MonomerResult {
    ChargeState charges;
    Eigen::VectorXd embedded_energies; // E'_I per fragment
    int iterations_used = 0;
    bool converged = false;
    double last_delta = 0.0; // max |charge change| of the final sweep
};

enum class DimerKind { Scf, Es };

struct DimerCorrection {
    int i = 0;
    int j = 0;
    DimerKind kind = DimerKind::Scf;
    double value = 0.0; // E'_IJ - E'_I - E'_J, or its ES approximation
};

struct WorkCounters {
    std::int64_t monomer_solves = 0;
    std::int64_t scf_dimer_solves = 0;
    std::int64_t es_evaluations = 0;
    std::int64_t potential_site_interactions = 0;
};

namespace detail {

inline double shielded_kernel(double r2, const EngineConfig& cfg) {
    const double d = std::sqrt(r2 + cfg.sigma * cfg.sigma);
    if (d < 1e-12)
        throw SingularGeometryError("coincident sites with zero shielding");
    return cfg.coulomb_constant / d;
}

inline double bare_kernel(double r2, const EngineConfig& cfg) {
    const double d = std::sqrt(r2);
    if (d < 1e-12)
        throw SingularGeometryError("coincident sites across fragments");
    return cfg.coulomb_constant / d;
}

/// Intra-fragment shielded coupling matrix S_I (zero diagonal: no self-interaction).
inline Eigen::MatrixXd intra_coupling(const Fragment& f, const EngineConfig& cfg) {
    const int n = f.size();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const double v =
                shielded_kernel((f.sites[a].position - f.sites[b].position).squaredNorm(), cfg);
            s(a, b) = v;
            s(b, a) = v;
        }
    return s;
}

/// Cross-fragment coupling matrix with the given kernel.
template <typename Kernel>
Eigen::MatrixXd cross_coupling(const Fragment& fa, const Fragment& fb,
                               const EngineConfig& cfg, Kernel kernel) {
    Eigen::MatrixXd c(fa.size(), fb.size());
    for (int a = 0; a < fa.size(); ++a)
        for (int b = 0; b < fb.size(); ++b)
            c(a, b) =
                kernel((fa.sites[a].position - fb.sites[b].position).squaredNorm(), cfg);
    return c;
}

/// Solves min 1/2 q^T M q + c^T q subject to B q = d via the KKT system, with a
/// residual check so an unusable factorization surfaces instead of garbage.
inline Eigen::VectorXd kkt_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& c,
                                 const Eigen::MatrixXd& b, const Eigen::VectorXd& d) {
    const Eigen::Index n = m.rows();
    const Eigen::Index k = b.rows();
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = m;
    kkt.topRightCorner(n, k) = b.transpose();
    kkt.bottomLeftCorner(k, n) = b;
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -c;
    rhs.tail(k) = d;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
    Eigen::VectorXd sol = lu.solve(rhs);
    const double denom = rhs.norm();
    if (!sol.allFinite() ||
        (kkt * sol - rhs).norm() > 1e-8 * std::max(denom, 1.0))
        throw NumericalError("KKT solve failed (singular or ill-conditioned system)");
    return sol.head(n);
}

inline double pair_energy(const Eigen::VectorXd& qa, const Eigen::VectorXd& qb,
                          const Eigen::MatrixXd& coupling) {
    return qa.dot(coupling * qb);
}

} // namespace detail

/// Bare-kernel electrostatic potential at `target`'s sites from all other fragments.
inline Eigen::VectorXd external_potential(const FragmentSystem& system,
                                          const ChargeState& charges, int target,
                                          const EngineConfig& cfg,
                                          WorkCounters* counters = nullptr) {
    const int n = system.fragment_count();
    if (target < 0 || target >= n)
        throw ValidationError("external_potential: target out of range");
    if (static_cast<int>(charges.size()) != n)
        throw ValidationError("external_potential: charge state size mismatch");
    const Fragment& ft = system.fragments[static_cast<std::size_t>(target)];
    Eigen::VectorXd v = Eigen::VectorXd::Zero(ft.size());
    for (int j = 0; j < n; ++j) {
        if (j == target)
            continue;
        const Fragment& fj = system.fragments[static_cast<std::size_t>(j)];
        const Eigen::MatrixXd c =
            detail::cross_coupling(ft, fj, cfg, detail::bare_kernel);
        v += c * charges[static_cast<std::size_t>(j)];
        if (counters)
            counters->potential_site_interactions +=
                static_cast<std::int64_t>(ft.size()) * fj.size();
    }
    return v;
}

/// Minimizes the fragment's quadratic energy under the charge constraint.
/// The returned internal energy excludes the v_ext terms.
struct MonomerSolution {
    Eigen::VectorXd charges;
    double internal_energy = 0.0;
};

inline MonomerSolution solve_monomer(const Fragment& f, const Eigen::VectorXd& v_ext,
                                     const EngineConfig& cfg) {
    const int n = f.size();
    if (v_ext.size() != n)
        throw ValidationError("solve_monomer: v_ext length != site count");
    const Eigen::MatrixXd m = f.hardness + detail::intra_coupling(f, cfg);
    Eigen::MatrixXd b = Eigen::MatrixXd::Ones(1, n);
    Eigen::VectorXd d(1);
    d[0] = f.net_charge;
    MonomerSolution sol;
    sol.charges = detail::kkt_solve(m, f.electronegativity + v_ext, b, d);
    sol.internal_energy = 0.5 * sol.charges.dot(m * sol.charges) +
                          f.electronegativity.dot(sol.charges);
    return sol;
}

/// Self-consistent monomer loop: Jacobi sweeps with damping. Starts from isolated
/// monomers (v_ext = 0, not counted as loop work), recomputes every fragment's
/// potential from the previous sweep's charges, and stops when the largest damped
/// charge change is at most tol. Embedded energies use the final charges:
/// E'_I = internal(q_I) + full bare-Coulomb interaction with all other fragments.
inline MonomerResult scc_loop(const FragmentSystem& system, const EngineConfig& cfg,
                              WorkCounters* counters = nullptr) {
    cfg.validate();
    system.validate();
    const int n = system.fragment_count();

    MonomerResult result;
    result.charges.reserve(static_cast<std::size_t>(n));
    for (const Fragment& f : system.fragments)
        result.charges.push_back(
            solve_monomer(f, Eigen::VectorXd::Zero(f.size()), cfg).charges);

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        ChargeState next(result.charges.size());
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd v =
                external_potential(system, result.charges, i, cfg, counters);
            const Fragment& f = system.fragments[static_cast<std::size_t>(i)];
            MonomerSolution sol = solve_monomer(f, v, cfg);
            if (counters)
                ++counters->monomer_solves;
            next[static_cast<std::size_t>(i)] =
                (1.0 - cfg.damping) * result.charges[static_cast<std::size_t>(i)] +
                cfg.damping * sol.charges;
            delta = std::max(delta, (next[static_cast<std::size_t>(i)] -
                                     result.charges[static_cast<std::size_t>(i)])
                                        .cwiseAbs()
                                        .maxCoeff());
        }
        result.charges = std::move(next);
        result.iterations_used = it;
        result.last_delta = delta;
        if (delta <= cfg.tol) {
            result.converged = true;
            break;
        }
    }

    result.embedded_energies = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const Fragment& f = system.fragments[static_cast<std::size_t>(i)];
        const Eigen::VectorXd& q = result.charges[static_cast<std::size_t>(i)];
        const Eigen::MatrixXd m = f.hardness + detail::intra_coupling(f, cfg);
        double e = 0.5 * q.dot(m * q) + f.electronegativity.dot(q);
        for (int j = 0; j < n; ++j) {
            if (j == i)
                continue;
            const Eigen::MatrixXd c = detail::cross_coupling(
                f, system.fragments[static_cast<std::size_t>(j)], cfg,
                detail::bare_kernel);
            e += detail::pair_energy(q, result.charges[static_cast<std::size_t>(j)], c);
        }
        result.embedded_energies[i] = e;
    }
    return result;
}

/// Embedded SCF-dimer energy E'_IJ: the pair's charges relax jointly with shielded
/// intra-pair coupling, in the frozen bare-Coulomb field of everything else. With
/// frozen_diagnostic the relaxation is skipped and the intra-pair kernel is bare,
/// which makes E'_IJ - E'_I - E'_J collapse to the -C_bare identity (see header).
inline double solve_scf_dimer(const FragmentSystem& system, const MonomerResult& monomer,
                              std::pair<int, int> pair, const EngineConfig& cfg,
                              bool frozen_diagnostic = false,
                              WorkCounters* counters = nullptr) {
    const int n = system.fragment_count();
    const auto [pi, pj] = pair;
    if (pi < 0 || pj < 0 || pi >= n || pj >= n || pi == pj)
        throw ValidationError("solve_scf_dimer: bad pair indices");
    const Fragment& fi = system.fragments[static_cast<std::size_t>(pi)];
    const Fragment& fj = system.fragments[static_cast<std::size_t>(pj)];
    const int ni = fi.size();
    const int nj = fj.size();

    // Frozen environment potentials (bare kernel) at the pair's sites.
    Eigen::VectorXd vi = Eigen::VectorXd::Zero(ni);
    Eigen::VectorXd vj = Eigen::VectorXd::Zero(nj);
    for (int l = 0; l < n; ++l) {
        if (l == pi || l == pj)
            continue;
        const Fragment& fl = system.fragments[static_cast<std::size_t>(l)];
        const Eigen::VectorXd& ql = monomer.charges[static_cast<std::size_t>(l)];
        vi += detail::cross_coupling(fi, fl, cfg, detail::bare_kernel) * ql;
        vj += detail::cross_coupling(fj, fl, cfg, detail::bare_kernel) * ql;
    }

    const Eigen::MatrixXd mi = fi.hardness + detail::intra_coupling(fi, cfg);
    const Eigen::MatrixXd mj = fj.hardness + detail::intra_coupling(fj, cfg);

    Eigen::VectorXd qi, qj;
    Eigen::MatrixXd cross;
    if (frozen_diagnostic) {
        cross = detail::cross_coupling(fi, fj, cfg, detail::bare_kernel);
        qi = monomer.charges[static_cast<std::size_t>(pi)];
        qj = monomer.charges[static_cast<std::size_t>(pj)];
    } else {
        cross = detail::cross_coupling(fi, fj, cfg, detail::shielded_kernel);
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(ni + nj, ni + nj);
        m.topLeftCorner(ni, ni) = mi;
        m.bottomRightCorner(nj, nj) = mj;
        m.topRightCorner(ni, nj) = cross;
        m.bottomLeftCorner(nj, ni) = cross.transpose();
        Eigen::VectorXd c(ni + nj);
        c.head(ni) = fi.electronegativity + vi;
        c.tail(nj) = fj.electronegativity + vj;
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, ni + nj);
        b.block(0, 0, 1, ni).setOnes();
        b.block(1, ni, 1, nj).setOnes();
        Eigen::VectorXd d(2);
        d << fi.net_charge, fj.net_charge;
        const Eigen::VectorXd q = detail::kkt_solve(m, c, b, d);
        qi = q.head(ni);
        qj = q.tail(nj);
    }
    if (counters)
        ++counters->scf_dimer_solves;

    double e = 0.5 * qi.dot(mi * qi) + fi.electronegativity.dot(qi) +
               0.5 * qj.dot(mj * qj) + fj.electronegativity.dot(qj) +
               detail::pair_energy(qi, qj, cross) + qi.dot(vi) + qj.dot(vj);
    return e;
}

/// Frozen-charge ES correction -C_bare(q_I*, q_J*); no relaxation.
inline double es_dimer_correction(const FragmentSystem& system,
                                  const MonomerResult& monomer, std::pair<int, int> pair,
                                  const EngineConfig& cfg,
                                  WorkCounters* counters = nullptr) {
    const int n = system.fragment_count();
    const auto [pi, pj] = pair;
    if (pi < 0 || pj < 0 || pi >= n || pj >= n || pi == pj)
        throw ValidationError("es_dimer_correction: bad pair indices");
    const Eigen::MatrixXd c = detail::cross_coupling(
        system.fragments[static_cast<std::size_t>(pi)],
        system.fragments[static_cast<std::size_t>(pj)], cfg, detail::bare_kernel);
    if (counters)
        ++counters->es_evaluations;
    return -detail::pair_energy(monomer.charges[static_cast<std::size_t>(pi)],
                                monomer.charges[static_cast<std::size_t>(pj)], c);
}

struct Fmo2Result {
    double total_energy = 0.0;
    double monomer_sum = 0.0;
    double scf_correction_sum = 0.0;
    double es_correction_sum = 0.0;
    MonomerResult monomer;
    std::vector<DimerCorrection> corrections;
    WorkCounters counters;
};

/// Full FMO2 assembly: E = sum E'_I + sum over SCF pairs (E'_IJ - E'_I - E'_J)
/// + sum over ES pairs of the frozen correction. Non-convergence of the monomer
/// loop is propagated via the flag, never silently dropped.
inline Fmo2Result fmo2_total_energy(const FragmentSystem& system,
                                    const PairClassification& cls,
                                    const EngineConfig& cfg) {
    Fmo2Result r;
    r.monomer = scc_loop(system, cfg, &r.counters);
    r.monomer_sum = r.monomer.embedded_energies.sum();
    for (const auto& pr : cls.scf_pairs) {
        const double e_ij =
            solve_scf_dimer(system, r.monomer, pr, cfg, false, &r.counters);
        const double corr = e_ij - r.monomer.embedded_energies[pr.first] -
                            r.monomer.embedded_energies[pr.second];
        r.corrections.push_back({pr.first, pr.second, DimerKind::Scf, corr});
        r.scf_correction_sum += corr;
    }
    for (const auto& pr : cls.es_pairs) {
        const double corr = es_dimer_correction(system, r.monomer, pr, cfg, &r.counters);
        r.corrections.push_back({pr.first, pr.second, DimerKind::Es, corr});
        r.es_correction_sum += corr;
    }
    r.total_energy = r.monomer_sum + r.scf_correction_sum + r.es_correction_sum;
    return r;
}

/// Total shielded-kernel energy of the whole system at the given charges
/// (the functional the oracle minimizes).
inline double full_energy_shielded(const FragmentSystem& system, const ChargeState& charges,
                                   const EngineConfig& cfg) {
    const int n = system.fragment_count();
    if (static_cast<int>(charges.size()) != n)
        throw ValidationError("full_energy_shielded: charge state size mismatch");
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
        const Fragment& f = system.fragments[static_cast<std::size_t>(i)];
        const Eigen::VectorXd& q = charges[static_cast<std::size_t>(i)];
        const Eigen::MatrixXd m = f.hardness + detail::intra_coupling(f, cfg);
        e += 0.5 * q.dot(m * q) + f.electronegativity.dot(q);
        for (int j = i + 1; j < n; ++j)
            e += detail::pair_energy(
                q, charges[static_cast<std::size_t>(j)],
                detail::cross_coupling(f, system.fragments[static_cast<std::size_t>(j)],
                                       cfg, detail::shielded_kernel));
    }
    return e;
}

/// Brute-force reference: one dense KKT solve of the full system with the shielded
/// kernel everywhere and one charge constraint per fragment.
inline double full_system_oracle(const FragmentSystem& system, const EngineConfig& cfg) {
    cfg.validate();
    system.validate();
    const std::size_t total = system.total_sites();
    if (total > 2000)
        throw CapacityError("full_system_oracle: " + std::to_string(total) +
                            " sites exceeds the dense-solve guard (2000)");
    const int n = system.fragment_count();
    const auto dim = static_cast<Eigen::Index>(total);

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd chi(dim);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, dim);
    Eigen::VectorXd d(n);
    std::vector<Eigen::Index> offset(static_cast<std::size_t>(n));
    Eigen::Index at = 0;
    for (int i = 0; i < n; ++i) {
        const Fragment& f = system.fragments[static_cast<std::size_t>(i)];
        offset[static_cast<std::size_t>(i)] = at;
        m.block(at, at, f.size(), f.size()) = f.hardness + detail::intra_coupling(f, cfg);
        chi.segment(at, f.size()) = f.electronegativity;
        b.block(i, at, 1, f.size()).setOnes();
        d[i] = f.net_charge;
        at += f.size();
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const Eigen::MatrixXd c = detail::cross_coupling(
                system.fragments[static_cast<std::size_t>(i)],
                system.fragments[static_cast<std::size_t>(j)], cfg,
                detail::shielded_kernel);
            m.block(offset[static_cast<std::size_t>(i)], offset[static_cast<std::size_t>(j)],
                    c.rows(), c.cols()) = c;
            m.block(offset[static_cast<std::size_t>(j)], offset[static_cast<std::size_t>(i)],
                    c.cols(), c.rows()) = c.transpose();
        }

    const Eigen::VectorXd q = detail::kkt_solve(m, chi, b, d);
    return 0.5 * q.dot(m * q) + chi.dot(q);
}

/// Run report consumed by the CLI and samples.
inline nlohmann::json run_report_json(const Fmo2Result& r, const std::string& label) {
    nlohmann::json j;
    j["system"] = label;
    j["total_energy"] = r.total_energy;
    j["breakdown"] = {{"monomer_sum", r.monomer_sum},
                      {"scf_dimer_correction_sum", r.scf_correction_sum},
                      {"es_dimer_correction_sum", r.es_correction_sum}};
    j["iterations_used"] = r.monomer.iterations_used;
    j["converged"] = r.monomer.converged;
    j["counters"] = {{"monomer_solves", r.counters.monomer_solves},
                     {"scf_dimer_solves", r.counters.scf_dimer_solves},
                     {"es_evaluations", r.counters.es_evaluations},
                     {"potential_site_interactions", r.counters.potential_site_interactions}};
    return j;
}

} // namespace fmoperf

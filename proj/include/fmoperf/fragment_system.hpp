// SPDX-License-Identifier: Apache-2.0
//
// Fragment-decomposed system representation: geometry, per-fragment charge-response
// parameters, pair classification by a distance threshold, and the abstract workload
// shapes (N_f, I_m, N_d, N_es) consumed by the cost model and the scheduler.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmoperf/errors.hpp"
#include "fmoperf/random.hpp"

namespace fmoperf {

struct Site {
    int id = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct Fragment {
    int id = 0;
    std::vector<Site> sites;
    Eigen::VectorXd electronegativity; // one entry per site, energy per charge
    Eigen::MatrixXd hardness;          // SPD, energy per charge^2
    double net_charge = 0.0;

    int size() const { return static_cast<int>(sites.size()); }

    /// Checks the structural invariants; throws ValidationError on the first violation.
    void validate() const {
        const auto n = static_cast<Eigen::Index>(sites.size());
        if (n == 0)
            throw ValidationError("fragment " + std::to_string(id) + ": no sites");
        std::unordered_set<int> ids;
        for (const Site& s : sites) {
            if (!s.position.allFinite())
                throw ValidationError("fragment " + std::to_string(id) +
                                      ": non-finite site position");
            if (!ids.insert(s.id).second)
                throw ValidationError("fragment " + std::to_string(id) +
                                      ": duplicate site id " + std::to_string(s.id));
        }
        if (electronegativity.size() != n)
            throw ValidationError("fragment " + std::to_string(id) +
                                  ": electronegativity length != site count");
        if (hardness.rows() != n || hardness.cols() != n)
            throw ValidationError("fragment " + std::to_string(id) +
                                  ": hardness shape != site count");
        if (!hardness.isApprox(hardness.transpose(), 1e-12))
            throw ValidationError("fragment " + std::to_string(id) +
                                  ": hardness not symmetric");
        // LLT succeeds exactly for positive-definite matrices.
        Eigen::LLT<Eigen::MatrixXd> llt(hardness);
        if (llt.info() != Eigen::Success)
            throw ValidationError("fragment " + std::to_string(id) +
                                  ": hardness not positive definite");
        if (!std::isfinite(net_charge))
            throw ValidationError("fragment " + std::to_string(id) +
                                  ": non-finite net charge");
    }
};

struct FragmentSystem {
    std::string label;
    std::vector<Fragment> fragments;

    int fragment_count() const { return static_cast<int>(fragments.size()); }

    std::size_t total_sites() const {
        std::size_t n = 0;
        for (const Fragment& f : fragments) n += f.sites.size();
        return n;
    }

    void validate() const {
        if (fragments.empty())
            throw ValidationError("system '" + label + "': no fragments");
        std::unordered_set<int> ids;
        for (const Fragment& f : fragments) {
            if (!ids.insert(f.id).second)
                throw ValidationError("system '" + label + "': duplicate fragment id " +
                                      std::to_string(f.id));
            f.validate();
        }
    }
};

/// Unordered fragment pairs, split into SCF-dimers (near) and ES-dimers (far).
/// Pairs are 0-based indices into FragmentSystem::fragments with first < second.
struct PairClassification {
    std::vector<std::pair<int, int>> scf_pairs;
    std::vector<std::pair<int, int>> es_pairs;
    double threshold = 0.0;
};

/// Abstract task counts of one fragment run; the only thing the cost model sees.
struct WorkloadShape {
    std::int64_t n_f = 0;  // fragments
    std::int64_t i_m = 0;  // monomer-loop iterations
    std::int64_t n_d = 0;  // SCF-dimer pairs
    std::int64_t n_es = 0; // ES-dimer pairs

    void validate() const {
        if (n_f < 0 || i_m < 0 || n_d < 0 || n_es < 0)
            throw ValidationError("workload shape: negative count");
        // measured shapes need not follow the model's pair split, but can never
        // hold more pairs than exist
        if (n_f <= 4'000'000'000LL && n_d + n_es > n_f * (n_f - 1) / 2)
            throw ValidationError("workload shape: n_d + n_es exceeds n_f(n_f-1)/2");
    }
};

/// Minimum Euclidean distance over all cross-fragment site pairs.
inline double min_distance(const Fragment& a, const Fragment& b) {
    double best = std::numeric_limits<double>::infinity();
    for (const Site& sa : a.sites)
        for (const Site& sb : b.sites)
            best = std::min(best, (sa.position - sb.position).norm());
    return best;
}

/// Splits all i < j pairs by the distance rule: min_distance <= threshold is an
/// SCF-dimer, anything farther an ES-dimer. Ties go to SCF (the accurate side).
inline PairClassification classify_pairs(const FragmentSystem& system, double threshold) {
    if (!(threshold > 0.0))
        throw ValidationError("classify_pairs: threshold must be > 0");
    PairClassification cls;
    cls.threshold = threshold;
    const int n = system.fragment_count();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (min_distance(system.fragments[i], system.fragments[j]) <= threshold)
                cls.scf_pairs.emplace_back(i, j);
            else
                cls.es_pairs.emplace_back(i, j);
        }
    return cls;
}

/// Deterministic quasi-linear chain along x: fragment centers `spacing` apart, small
/// seeded jitter on every site, random electronegativities, and diagonally dominant
/// (hence SPD) hardness matrices. Fragments are neutral.
inline FragmentSystem generate_chain(int n_f, int sites_per_fragment, double spacing,
                                     std::uint64_t seed) {
    if (n_f < 1)
        throw ValidationError("generate_chain: n_f must be >= 1");
    if (sites_per_fragment < 1)
        throw ValidationError("generate_chain: sites_per_fragment must be >= 1");
    if (!(spacing > 0.0))
        throw ValidationError("generate_chain: spacing must be > 0");

    Prng rng(seed);
    FragmentSystem system;
    system.label = "chain" + std::to_string(n_f);
    system.fragments.reserve(static_cast<std::size_t>(n_f));

    const int m = sites_per_fragment;
    for (int fi = 0; fi < n_f; ++fi) {
        Fragment frag;
        frag.id = fi + 1;
        frag.net_charge = 0.0;
        frag.sites.reserve(static_cast<std::size_t>(m));
        const double cx = spacing * static_cast<double>(fi);
        for (int si = 0; si < m; ++si) {
            Site s;
            s.id = si + 1;
            // Local offsets stay within ~+-0.9 A so consecutive fragments remain
            // roughly `spacing` apart and never collide for spacing >= 2.
            const double ox = 0.6 * (static_cast<double>(si) - 0.5 * (m - 1)) / std::max(1, m);
            s.position = Eigen::Vector3d(cx + ox + rng.uniform(-0.15, 0.15),
                                         rng.uniform(-0.3, 0.3),
                                         rng.uniform(-0.3, 0.3));
            frag.sites.push_back(s);
        }
        frag.electronegativity = Eigen::VectorXd::Zero(m);
        for (int si = 0; si < m; ++si)
            frag.electronegativity[si] = rng.uniform(-0.5, 0.5);
        frag.hardness = Eigen::MatrixXd::Zero(m, m);
        for (int r = 0; r < m; ++r)
            for (int c = r + 1; c < m; ++c) {
                const double off = rng.uniform(-0.1, 0.1);
                frag.hardness(r, c) = off;
                frag.hardness(c, r) = off;
            }
        // Row sums of |off-diagonal| are at most 0.1*(m-1), so this diagonal keeps
        // every row strictly dominant regardless of m.
        for (int r = 0; r < m; ++r)
            frag.hardness(r, r) = 2.0 + 0.1 * (m - 1) + rng.uniform(0.0, 0.5);
        system.fragments.push_back(std::move(frag));
    }
    return system;
}

/// Collapses a classification to the four counts the cost model needs.
inline WorkloadShape workload_shape(const PairClassification& cls, std::int64_t n_f,
                                    std::int64_t i_m) {
    WorkloadShape shape;
    shape.n_f = n_f;
    shape.i_m = i_m;
    shape.n_d = static_cast<std::int64_t>(cls.scf_pairs.size());
    shape.n_es = static_cast<std::int64_t>(cls.es_pairs.size());
    shape.validate();
    if (shape.n_d + shape.n_es != n_f * (n_f - 1) / 2)
        throw ValidationError("workload_shape: classification inconsistent with n_f");
    return shape;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline nlohmann::json system_to_json(const FragmentSystem& system) {
    nlohmann::json j;
    j["label"] = system.label;
    j["fragments"] = nlohmann::json::array();
    for (const Fragment& f : system.fragments) {
        nlohmann::json jf;
        jf["id"] = f.id;
        jf["net_charge"] = f.net_charge;
        jf["electronegativity"] =
            std::vector<double>(f.electronegativity.data(),
                                f.electronegativity.data() + f.electronegativity.size());
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < f.hardness.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(f.hardness.cols()));
            for (Eigen::Index c = 0; c < f.hardness.cols(); ++c)
                row[static_cast<std::size_t>(c)] = f.hardness(r, c);
            rows.push_back(row);
        }
        jf["hardness"] = std::move(rows);
        jf["sites"] = nlohmann::json::array();
        for (const Site& s : f.sites)
            jf["sites"].push_back({{"id", s.id},
                                   {"position", {s.position.x(), s.position.y(), s.position.z()}}});
        j["fragments"].push_back(std::move(jf));
    }
    return j;
}

inline FragmentSystem system_from_json(const nlohmann::json& j) {
    FragmentSystem system;
    try {
        system.label = j.value("label", std::string{});
        if (!j.contains("fragments") || !j.at("fragments").is_array())
            throw ParseError("system: missing 'fragments' array");
        for (const auto& jf : j.at("fragments")) {
            Fragment f;
            f.id = jf.at("id").get<int>();
            f.net_charge = jf.value("net_charge", 0.0);
            const auto& js = jf.at("sites");
            if (!js.is_array() || js.empty())
                throw ParseError("fragment " + std::to_string(f.id) + ": bad 'sites'");
            for (const auto& s : js) {
                Site site;
                site.id = s.at("id").get<int>();
                const auto& p = s.at("position");
                if (!p.is_array() || p.size() != 3)
                    throw ParseError("fragment " + std::to_string(f.id) +
                                     ": position must have 3 components");
                site.position =
                    Eigen::Vector3d(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
                f.sites.push_back(site);
            }
            const auto n = static_cast<Eigen::Index>(f.sites.size());
            const auto chi = jf.at("electronegativity").get<std::vector<double>>();
            f.electronegativity = Eigen::Map<const Eigen::VectorXd>(
                chi.data(), static_cast<Eigen::Index>(chi.size()));
            const auto& jh = jf.at("hardness");
            if (!jh.is_array() || static_cast<Eigen::Index>(jh.size()) != n)
                throw ParseError("fragment " + std::to_string(f.id) + ": bad 'hardness'");
            f.hardness.resize(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
                const auto row = jh[static_cast<std::size_t>(r)].get<std::vector<double>>();
                if (static_cast<Eigen::Index>(row.size()) != n)
                    throw ParseError("fragment " + std::to_string(f.id) +
                                     ": ragged 'hardness' row");
                for (Eigen::Index c = 0; c < n; ++c)
                    f.hardness(r, c) = row[static_cast<std::size_t>(c)];
            }
            system.fragments.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("system JSON: ") + e.what());
    }
    system.validate();
    return system;
}

inline FragmentSystem load_system(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open system file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("system file " + path.string() + ": " + e.what());
    }
    return system_from_json(j);
}

inline void save_system(const FragmentSystem& system, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write system file: " + path.string());
    out << system_to_json(system).dump(2) << '\n';
}

} // namespace fmoperf

// SPDX-License-Identifier: Apache-2.0
//
// Discrete-event scheduling simulator for fragment task populations.
//
// The machine is K workers of efficiency e. A run is a sequence of phases with a
// synchronization barrier between consecutive phases (the monomer loop refreshes a
// global potential, so every iteration is one phase; all dimer tasks share one
// final phase). Within a phase, tasks are dispatched FIFO in task-id order, each to
// the earliest-free worker, ties to the lowest worker index; LPT ordering is an
// option. Tasks never preempt.
//
// Task populations are stored as groups (kind, count, duration) rather than
// materialized task vectors, so shapes with billions of ES dimers stay cheap. Equal
// groups admit a closed form: a worker free at f executes its j-th task of the
// group to completion f + j*d, so group scheduling reduces to taking the count
// smallest instants of K arithmetic lattices. The closed form and the explicit heap
// path compute every completion as f + j*d (never a running sum), which keeps the
// two bitwise identical; tests assert that.
//
// The workflow mode models a loosely-coupled pipeline: modules connected by file
// transfers, each module = startup + stage_in + body + stage_out, executed one
// module at a time on the shared cluster (a module may additionally wait for its
// DAG predecessors). Failures hit whole module attempts (that is the restart
// granularity) with a per-task probability aggregated over the module's tasks,
// drawn from a seeded generator; retries re-run the module after a penalty.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmoperf/cost_model.hpp"
#include "fmoperf/errors.hpp"
#include "fmoperf/fragment_system.hpp"
#include "fmoperf/random.hpp"

namespace fmoperf {

enum class TaskKind { MonomerIter, ScfDimer, EsDimer, ModuleOverhead, StageFile };

inline const char* task_kind_name(TaskKind k) {
    switch (k) {
    case TaskKind::MonomerIter: return "monomer-iter";
    case TaskKind::ScfDimer: return "scf-dimer";
    case TaskKind::EsDimer: return "es-dimer";
    case TaskKind::ModuleOverhead: return "module-overhead";
    case TaskKind::StageFile: return "stage-file";
    }
    return "?";
}

struct Task {
    std::int64_t id = 0;
    TaskKind kind = TaskKind::MonomerIter;
    double duration = 0.0;
    int phase = 0;
};

/// `count` identical tasks; ids are first_id .. first_id + count - 1.
struct TaskGroup {
    TaskKind kind = TaskKind::MonomerIter;
    std::int64_t count = 0;
    double duration = 0.0;
    std::int64_t first_id = 0;
};

struct TaskPhase {
    std::vector<TaskGroup> groups;
};

struct TaskList {
    std::vector<TaskPhase> phases;

    std::int64_t task_count() const {
        std::int64_t n = 0;
        for (const TaskPhase& p : phases)
            for (const TaskGroup& g : p.groups) n += g.count;
        return n;
    }

    double total_work() const {
        double w = 0.0;
        for (const TaskPhase& p : phases)
            for (const TaskGroup& g : p.groups) w += static_cast<double>(g.count) * g.duration;
        return w;
    }

    double max_duration() const {
        double d = 0.0;
        for (const TaskPhase& p : phases)
            for (const TaskGroup& g : p.groups)
                if (g.count > 0) d = std::max(d, g.duration);
        return d;
    }

    void validate() const {
        for (const TaskPhase& p : phases)
            for (const TaskGroup& g : p.groups) {
                if (g.count < 0)
                    throw ValidationError("task group: negative count");
                if (!(g.duration >= 0.0) || !std::isfinite(g.duration))
                    throw ValidationError("task group: duration must be finite and >= 0");
            }
    }
};

struct ClusterConfig {
    std::int64_t k = 1;
    double e = 1.0;
    double dispatch_overhead = 0.0; // seconds added to every task at dispatch

    void validate() const {
        if (k < 1 || k > 1'000'000)
            throw ValidationError("cluster: k must be in [1, 1e6]");
        if (!(e > 0.0) || !std::isfinite(e))
            throw ValidationError("cluster: e must be > 0");
        if (!(dispatch_overhead >= 0.0) || !std::isfinite(dispatch_overhead))
            throw ValidationError("cluster: dispatch_overhead must be >= 0");
    }
};

inline ClusterConfig cluster_from(const MachineSpec& m, double dispatch_overhead = 0.0) {
    ClusterConfig c;
    c.k = m.k;
    c.e = m.e;
    c.dispatch_overhead = dispatch_overhead;
    return c;
}

enum class SchedulePolicy { Fifo, Lpt };

struct SimOptions {
    SchedulePolicy policy = SchedulePolicy::Fifo;
    bool record_timeline = false;
    // Groups larger than this use the closed form; irrelevant for results, which
    // are bitwise identical either way. record_timeline forces the explicit path.
    std::int64_t exact_threshold = 1'000'000;
};

struct SimEvent {
    double time = 0.0;
    std::int64_t worker = 0;
    std::int64_t task_id = 0;
    TaskKind kind = TaskKind::MonomerIter;
    bool finish = false; // false: start, true: finish
};

struct PhaseStat {
    int index = 0;
    std::int64_t tasks = 0;
    double start = 0.0;
    double end = 0.0;
};

struct ModuleStat {
    std::string name;
    double start = 0.0;
    double end = 0.0;
    double body_makespan = 0.0;
    double overhead = 0.0; // startup + stage_in + stage_out of one attempt
    int attempts = 1;
    bool completed = true;
};

struct SimReport {
    double makespan = 0.0;
    double ideal_time = 0.0; // executed work / K
    double efficiency = 1.0; // ideal_time / makespan, clamped to 1 against FP noise
    std::int64_t retries = 0;
    bool completed = true;
    std::vector<PhaseStat> phases;
    std::vector<ModuleStat> modules;  // workflow mode only
    std::vector<SimEvent> timeline;   // only when requested
};

namespace detail {

// Closed-form scheduling of `count` equal tasks of effective duration delta on the
// workers' current free times. Mutates ft, returns the latest completion.
inline double schedule_group_aggregate(std::vector<double>& ft, std::int64_t count,
                                       double delta) {
    if (count == 0)
        return -std::numeric_limits<double>::infinity();
    if (delta == 0.0) {
        // Every task runs instantly on the earliest-free worker; state unchanged.
        return *std::min_element(ft.begin(), ft.end());
    }

    struct Level {
        double base;
        std::vector<std::int64_t> workers;
    };
    std::map<double, std::vector<std::int64_t>> by_base;
    for (std::int64_t w = 0; w < static_cast<std::int64_t>(ft.size()); ++w)
        by_base[ft[static_cast<std::size_t>(w)]].push_back(w);
    std::vector<Level> levels;
    levels.reserve(by_base.size());
    for (auto& [base, workers] : by_base)
        levels.push_back({base, std::move(workers)});
    if (levels.size() > 512)
        throw CapacityError("aggregate scheduling supports at most 512 distinct worker "
                            "free times; lower SimOptions::exact_threshold usage");

    const std::int64_t jcap = count; // one worker never takes more than count tasks

    // Largest j in [0, jcap] with base + j*delta <= t, as a count of instants;
    // computed by bisection on j so the comparisons match the explicit path exactly.
    const auto instants_le = [&](double base, double t) -> std::int64_t {
        if (!(base <= t))
            return 0;
        std::int64_t lo = 0, hi = jcap;
        while (lo < hi) {
            const std::int64_t mid = lo + (hi - lo + 1) / 2;
            if (base + static_cast<double>(mid) * delta <= t)
                lo = mid;
            else
                hi = mid - 1;
        }
        return lo + 1;
    };
    const auto instants_lt = [&](double base, double t) -> std::int64_t {
        if (!(base < t))
            return 0;
        std::int64_t lo = 0, hi = jcap;
        while (lo < hi) {
            const std::int64_t mid = lo + (hi - lo + 1) / 2;
            if (base + static_cast<double>(mid) * delta < t)
                lo = mid;
            else
                hi = mid - 1;
        }
        return lo + 1;
    };
    const auto total_le = [&](double t) -> std::int64_t {
        std::int64_t s = 0;
        for (const Level& l : levels) {
            s += static_cast<std::int64_t>(l.workers.size()) * instants_le(l.base, t);
            if (s >= count)
                return count; // capped; callers only compare against count
        }
        return s;
    };

    // The count-th smallest dispatch instant T, searched over per-level candidates
    // base + j*delta.
    double t_star = std::numeric_limits<double>::infinity();
    for (const Level& l : levels) {
        std::int64_t lo = 0, hi = jcap;
        while (lo < hi) {
            const std::int64_t mid = lo + (hi - lo) / 2;
            if (total_le(l.base + static_cast<double>(mid) * delta) >= count)
                hi = mid;
            else
                lo = mid + 1;
        }
        t_star = std::min(t_star, l.base + static_cast<double>(lo) * delta);
    }

    // Full allocations strictly below T, then break ties at T by worker index.
    std::int64_t below = 0;
    std::vector<std::int64_t> full(levels.size(), 0);
    std::vector<std::int64_t> tie_workers;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        const Level& l = levels[li];
        full[li] = instants_lt(l.base, t_star);
        below += static_cast<std::int64_t>(l.workers.size()) * full[li];
        if (instants_le(l.base, t_star) > full[li])
            tie_workers.insert(tie_workers.end(), l.workers.begin(), l.workers.end());
    }
    std::int64_t remaining = count - below;
    std::sort(tie_workers.begin(), tie_workers.end());
    std::unordered_set<std::int64_t> bumped;
    for (std::int64_t i = 0; i < remaining && i < static_cast<std::int64_t>(tie_workers.size()); ++i)
        bumped.insert(tie_workers[static_cast<std::size_t>(i)]);

    double end = -std::numeric_limits<double>::infinity();
    for (std::size_t li = 0; li < levels.size(); ++li) {
        const Level& l = levels[li];
        for (std::int64_t w : l.workers) {
            const std::int64_t n = full[li] + (bumped.count(w) ? 1 : 0);
            if (n > 0) {
                ft[static_cast<std::size_t>(w)] = l.base + static_cast<double>(n) * delta;
                end = std::max(end, ft[static_cast<std::size_t>(w)]);
            }
        }
    }
    return end;
}

// Explicit dispatch via a min-heap; optionally records start/finish events.
// Completions are base + j*delta per worker, matching the closed form bitwise.
inline double schedule_group_exact(std::vector<double>& ft, const TaskGroup& g,
                                   double delta, std::vector<SimEvent>* events) {
    if (g.count == 0)
        return -std::numeric_limits<double>::infinity();
    using Entry = std::pair<double, std::int64_t>;
    std::vector<Entry> entries;
    entries.reserve(ft.size());
    for (std::int64_t w = 0; w < static_cast<std::int64_t>(ft.size()); ++w)
        entries.emplace_back(ft[static_cast<std::size_t>(w)], w);
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq(std::greater<>{},
                                                                      std::move(entries));
    std::vector<double> base = ft;
    std::vector<std::int64_t> taken(ft.size(), 0);
    double end = -std::numeric_limits<double>::infinity();
    for (std::int64_t t = 0; t < g.count; ++t) {
        const auto [free, w] = pq.top();
        pq.pop();
        const double completion =
            delta == 0.0
                ? free
                : base[static_cast<std::size_t>(w)] +
                      static_cast<double>(taken[static_cast<std::size_t>(w)] + 1) * delta;
        ++taken[static_cast<std::size_t>(w)];
        if (events) {
            events->push_back({free, w, g.first_id + t, g.kind, false});
            events->push_back({completion, w, g.first_id + t, g.kind, true});
        }
        ft[static_cast<std::size_t>(w)] = completion;
        end = std::max(end, completion);
        pq.push({completion, w});
    }
    return end;
}

} // namespace detail

/// Heterogeneity hook: relative duration jitter, off by default. With amplitude a,
/// each task's duration is scaled by a seeded uniform factor in [1-a, 1+a).
struct JitterOptions {
    double amplitude = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(amplitude >= 0.0) || amplitude >= 1.0)
            throw ValidationError("jitter: amplitude must be in [0, 1)");
    }
};

/// Task population of one fragment run: I_m monomer phases (barrier after each),
/// then one phase holding the SCF-dimer and ES-dimer bags. Durations are the
/// per-task forms of the work model divided by the worker efficiency. Jittered
/// populations are materialized per task and therefore capped at 5e6 tasks.
inline TaskList build_tasks(const WorkloadShape& s, const CostParameters& p,
                            const ClusterConfig& c, const JitterOptions& jitter = {}) {
    s.validate();
    p.validate();
    c.validate();
    jitter.validate();
    const auto nf = static_cast<double>(s.n_f);
    const double d_mono = (p.f_m0 + p.f_m1 * nf) / c.e;
    const double d_scf = (p.f_d0 + p.f_d1 * nf) / c.e;
    const double d_es = p.f_es0 / c.e;

    const bool jittered = jitter.amplitude > 0.0;
    const std::int64_t n_tasks = s.n_f * s.i_m + s.n_d + s.n_es;
    if (jittered && n_tasks > 5'000'000)
        throw ValidationError("build_tasks: jitter requires materializing tasks, "
                              "capped at 5e6");
    Prng rng(jitter.seed);
    const auto scaled = [&](double d) {
        return jittered ? d * rng.uniform(1.0 - jitter.amplitude, 1.0 + jitter.amplitude)
                        : d;
    };
    const auto emit = [&](TaskPhase& phase, TaskKind kind, std::int64_t count,
                          double duration, std::int64_t& next_id) {
        if (count == 0)
            return;
        if (!jittered) {
            phase.groups.push_back({kind, count, duration, next_id});
            next_id += count;
            return;
        }
        for (std::int64_t i = 0; i < count; ++i)
            phase.groups.push_back({kind, 1, scaled(duration), next_id++});
    };

    TaskList tasks;
    std::int64_t next_id = 0;
    for (std::int64_t it = 0; it < s.i_m && s.n_f > 0; ++it) {
        TaskPhase phase;
        emit(phase, TaskKind::MonomerIter, s.n_f, d_mono, next_id);
        tasks.phases.push_back(std::move(phase));
    }
    if (s.n_d > 0 || s.n_es > 0) {
        TaskPhase dimers;
        emit(dimers, TaskKind::ScfDimer, s.n_d, d_scf, next_id);
        emit(dimers, TaskKind::EsDimer, s.n_es, d_es, next_id);
        tasks.phases.push_back(std::move(dimers));
    }
    return tasks;
}

/// Wraps an explicit task vector: tasks are bucketed by phase ordinal and kept in
/// ascending id order within each phase (one singleton group per task).
inline TaskList task_list_from_tasks(std::vector<Task> tasks) {
    std::stable_sort(tasks.begin(), tasks.end(), [](const Task& a, const Task& b) {
        return a.phase != b.phase ? a.phase < b.phase : a.id < b.id;
    });
    TaskList out;
    std::optional<int> current;
    for (const Task& t : tasks) {
        if (!(t.duration >= 0.0) || !std::isfinite(t.duration))
            throw ValidationError("task: duration must be finite and >= 0");
        if (!current || *current != t.phase) {
            out.phases.emplace_back();
            current = t.phase;
        }
        out.phases.back().groups.push_back({t.kind, 1, t.duration, t.id});
    }
    return out;
}

inline SimReport simulate(const TaskList& tasks, const ClusterConfig& c,
                          const SimOptions& opts = {}) {
    tasks.validate();
    c.validate();
    if (opts.record_timeline && tasks.task_count() > 5'000'000)
        throw ValidationError("simulate: timeline recording capped at 5e6 tasks");

    SimReport report;
    std::vector<double> ft(static_cast<std::size_t>(c.k), 0.0);
    double now = 0.0;
    int index = 0;
    for (const TaskPhase& phase : tasks.phases) {
        std::int64_t n_tasks = 0;
        for (const TaskGroup& g : phase.groups) n_tasks += g.count;
        if (n_tasks == 0)
            continue;
        std::fill(ft.begin(), ft.end(), now); // barrier: all workers aligned
        std::vector<TaskGroup> groups = phase.groups;
        if (opts.policy == SchedulePolicy::Lpt)
            std::stable_sort(groups.begin(), groups.end(),
                             [](const TaskGroup& a, const TaskGroup& b) {
                                 return a.duration > b.duration;
                             });
        double phase_end = now;
        for (const TaskGroup& g : groups) {
            if (g.count == 0)
                continue;
            const double delta = g.duration + c.dispatch_overhead;
            double end;
            if (opts.record_timeline || g.count <= opts.exact_threshold)
                end = detail::schedule_group_exact(
                    ft, g, delta, opts.record_timeline ? &report.timeline : nullptr);
            else
                end = detail::schedule_group_aggregate(ft, g.count, delta);
            phase_end = std::max(phase_end, end);
        }
        report.phases.push_back({index++, n_tasks, now, phase_end});
        now = phase_end;
    }
    report.makespan = now;
    report.ideal_time = tasks.total_work() / static_cast<double>(c.k);
    // makespan >= ideal holds mathematically; the min() only absorbs last-ulp
    // rounding in the closed-form completions.
    report.efficiency =
        report.makespan > 0.0 ? std::min(1.0, report.ideal_time / report.makespan) : 1.0;
    // chronological log; ties keep dispatch order (phase, then group, then task id)
    std::stable_sort(report.timeline.begin(), report.timeline.end(),
                     [](const SimEvent& a, const SimEvent& b) { return a.time < b.time; });
    return report;
}

inline SimReport simulate(const std::vector<Task>& tasks, const ClusterConfig& c,
                          const SimOptions& opts = {}) {
    return simulate(task_list_from_tasks(tasks), c, opts);
}

// ---------------------------------------------------------------------------
// Workflow mode
// ---------------------------------------------------------------------------

/// Module body: either a fixed wall-clock duration (an opaque serial job) or a
/// fragment task population scheduled on the cluster.
struct ModuleBody {
    double fixed = 0.0;
    std::optional<WorkloadShape> shape;
    std::optional<CostParameters> params;

    bool is_population() const { return shape.has_value(); }

    void validate() const {
        if (is_population()) {
            if (!params)
                throw ValidationError("module body: shape requires params");
            shape->validate();
            params->validate();
        } else if (!(fixed >= 0.0) || !std::isfinite(fixed)) {
            throw ValidationError("module body: fixed duration must be finite and >= 0");
        }
    }

    std::int64_t task_count() const {
        if (!is_population())
            return 1;
        return shape->n_f * shape->i_m + shape->n_d + shape->n_es;
    }
};

struct WorkflowModule {
    std::string name;
    double startup = 0.0;
    double stage_in = 0.0;
    double stage_out = 0.0;
    ModuleBody body;
};

struct WorkflowSpec {
    std::string label;
    std::vector<WorkflowModule> modules;
    std::vector<std::pair<std::string, std::string>> edges; // from -> to

    void validate() const;
    std::vector<std::size_t> topological_order() const;
};

struct FaultModel {
    double failure_probability = 0.0; // per task, per attempt
    int retry_limit = 0;
    double retry_penalty = 0.0; // seconds between attempts
    std::uint64_t seed = 0;

    void validate() const {
        if (!(failure_probability >= 0.0) || failure_probability >= 1.0)
            throw ValidationError("fault model: failure_probability must be in [0, 1)");
        if (retry_limit < 0)
            throw ValidationError("fault model: retry_limit must be >= 0");
        if (!(retry_penalty >= 0.0) || !std::isfinite(retry_penalty))
            throw ValidationError("fault model: retry_penalty must be >= 0");
    }
};

inline void WorkflowSpec::validate() const {
    if (modules.empty())
        throw ValidationError("workflow '" + label + "': no modules");
    std::unordered_set<std::string> names;
    for (const WorkflowModule& m : modules) {
        if (m.name.empty())
            throw ValidationError("workflow: module with empty name");
        if (!names.insert(m.name).second)
            throw ValidationError("workflow: duplicate module name '" + m.name + "'");
        for (double v : {m.startup, m.stage_in, m.stage_out})
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ValidationError("module '" + m.name +
                                      "': overheads must be finite and >= 0");
        m.body.validate();
    }
    for (const auto& [from, to] : edges)
        if (!names.count(from) || !names.count(to))
            throw DagError("workflow edge references unknown module: " + from + " -> " + to);
    topological_order(); // throws DagError on a cycle
}

/// Kahn's algorithm; among simultaneously ready modules, input order wins.
inline std::vector<std::size_t> WorkflowSpec::topological_order() const {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < modules.size(); ++i)
        index.emplace(modules[i].name, i);
    std::vector<int> indegree(modules.size(), 0);
    std::vector<std::vector<std::size_t>> out(modules.size());
    for (const auto& [from, to] : edges) {
        const auto fi = index.find(from);
        const auto ti = index.find(to);
        if (fi == index.end() || ti == index.end())
            throw DagError("workflow edge references unknown module: " + from + " -> " + to);
        out[fi->second].push_back(ti->second);
        ++indegree[ti->second];
    }
    std::vector<std::size_t> order;
    std::vector<bool> done(modules.size(), false);
    while (order.size() < modules.size()) {
        bool progressed = false;
        for (std::size_t i = 0; i < modules.size(); ++i) {
            if (done[i] || indegree[i] != 0)
                continue;
            done[i] = true;
            order.push_back(i);
            for (std::size_t j : out[i]) --indegree[j];
            progressed = true;
        }
        if (!progressed)
            throw DagError("workflow '" + label + "' contains a cycle");
    }
    return order;
}

/// Serializes the workflow into a phased task list: per module (topological order)
/// a startup task, a stage-in task, the body, and a stage-out task, each in its own
/// barrier-delimited phase. simulate() on this list equals simulate_workflow with a
/// zero fault model.
inline TaskList flatten_workflow(const WorkflowSpec& w, const ClusterConfig& c) {
    w.validate();
    TaskList out;
    std::int64_t next_id = 0;
    const auto serial = [&](TaskKind kind, double duration) {
        TaskPhase phase;
        phase.groups.push_back({kind, 1, duration, next_id++});
        out.phases.push_back(std::move(phase));
    };
    for (std::size_t mi : w.topological_order()) {
        const WorkflowModule& m = w.modules[mi];
        serial(TaskKind::ModuleOverhead, m.startup);
        serial(TaskKind::StageFile, m.stage_in);
        if (m.body.is_population()) {
            TaskList body = build_tasks(*m.body.shape, *m.body.params, c);
            for (TaskPhase& phase : body.phases) {
                for (TaskGroup& g : phase.groups) {
                    g.first_id = next_id;
                    next_id += g.count;
                }
                out.phases.push_back(std::move(phase));
            }
        } else {
            serial(TaskKind::ModuleOverhead, m.body.fixed);
        }
        serial(TaskKind::StageFile, m.stage_out);
    }
    return out;
}

inline SimReport simulate_workflow(const WorkflowSpec& w, const ClusterConfig& c,
                                   const FaultModel& f = {}, const SimOptions& opts = {}) {
    w.validate();
    c.validate();
    f.validate();

    SimReport report;
    Prng rng(f.seed);
    std::unordered_map<std::string, double> finish;
    double now = 0.0;
    double executed_work = 0.0;
    for (std::size_t mi : w.topological_order()) {
        const WorkflowModule& m = w.modules[mi];
        double start = now; // one module at a time on the shared cluster
        for (const auto& [from, to] : w.edges)
            if (to == m.name)
                start = std::max(start, finish[from]);

        double body_makespan, body_work;
        if (m.body.is_population()) {
            const SimReport body =
                simulate(build_tasks(*m.body.shape, *m.body.params, c), c, opts);
            body_makespan = body.makespan;
            body_work = body.ideal_time * static_cast<double>(c.k);
        } else {
            body_makespan = m.body.fixed;
            body_work = m.body.fixed;
        }
        const double attempt_time = m.startup + m.stage_in + body_makespan + m.stage_out;
        const double attempt_work = m.startup + m.stage_in + body_work + m.stage_out;
        const double p_attempt =
            1.0 - std::pow(1.0 - f.failure_probability,
                           static_cast<double>(m.body.task_count()));

        ModuleStat stat;
        stat.name = m.name;
        stat.start = start;
        stat.body_makespan = body_makespan;
        stat.overhead = m.startup + m.stage_in + m.stage_out;
        double t = start;
        bool ok = false;
        for (int attempt = 1;; ++attempt) {
            stat.attempts = attempt;
            t += attempt_time;
            executed_work += attempt_work;
            if (!(rng.uniform() < p_attempt)) {
                ok = true;
                break;
            }
            if (attempt > f.retry_limit)
                break;
            ++report.retries;
            t += f.retry_penalty;
        }
        stat.end = t;
        stat.completed = ok;
        finish[m.name] = t;
        now = std::max(now, t);
        report.modules.push_back(std::move(stat));
        if (!ok) {
            report.completed = false; // downstream modules never run
            break;
        }
    }
    report.makespan = now;
    report.ideal_time = executed_work / static_cast<double>(c.k);
    report.efficiency =
        report.makespan > 0.0 ? std::min(1.0, report.ideal_time / report.makespan) : 1.0;
    return report;
}

// ---------------------------------------------------------------------------
// Efficiency sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    std::int64_t n_f = 0;
    WorkBreakdown work;
    double t_predict = 0.0;
    double t_simulated = 0.0;
    double efficiency = 0.0;
};

inline std::vector<SweepRow> efficiency_sweep(const std::vector<std::int64_t>& nf_values,
                                              std::int64_t i_m, const CostParameters& p,
                                              const MachineSpec& m,
                                              double dispatch_overhead = 0.0) {
    m.validate();
    const ClusterConfig c = cluster_from(m, dispatch_overhead);
    std::vector<SweepRow> rows;
    rows.reserve(nf_values.size());
    for (std::int64_t nf : nf_values) {
        const WorkloadShape shape = shape_from_nf(nf, i_m, p);
        SweepRow row;
        row.n_f = nf;
        row.work = work_total(shape, p);
        row.t_predict = predict_elapsed(shape, p, m);
        const SimReport rep = simulate(build_tasks(shape, p, c), c);
        row.t_simulated = rep.makespan;
        row.efficiency = rep.efficiency;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json sim_report_to_json(const SimReport& r) {
    nlohmann::json j;
    j["makespan"] = r.makespan;
    j["ideal_time"] = r.ideal_time;
    j["efficiency"] = r.efficiency;
    j["retries"] = r.retries;
    j["completed"] = r.completed;
    j["phases"] = nlohmann::json::array();
    for (const PhaseStat& p : r.phases)
        j["phases"].push_back(
            {{"index", p.index}, {"tasks", p.tasks}, {"start", p.start}, {"end", p.end}});
    if (!r.modules.empty()) {
        j["modules"] = nlohmann::json::array();
        for (const ModuleStat& m : r.modules)
            j["modules"].push_back({{"name", m.name},
                                    {"start", m.start},
                                    {"end", m.end},
                                    {"body_makespan", m.body_makespan},
                                    {"overhead", m.overhead},
                                    {"attempts", m.attempts},
                                    {"completed", m.completed}});
    }
    return j;
}

inline std::string events_to_csv(const std::vector<SimEvent>& events) {
    std::ostringstream out;
    out << "time,worker,task,kind,event\n";
    out.precision(17);
    for (const SimEvent& e : events)
        out << e.time << ',' << e.worker << ',' << e.task_id << ','
            << task_kind_name(e.kind) << ',' << (e.finish ? "finish" : "start") << '\n';
    return out.str();
}

inline nlohmann::json workflow_to_json(const WorkflowSpec& w) {
    nlohmann::json j;
    j["label"] = w.label;
    j["modules"] = nlohmann::json::array();
    for (const WorkflowModule& m : w.modules) {
        nlohmann::json jm{{"name", m.name},
                          {"startup", m.startup},
                          {"stage_in", m.stage_in},
                          {"stage_out", m.stage_out}};
        if (m.body.is_population()) {
            jm["body"] = {{"shape",
                           {{"n_f", m.body.shape->n_f},
                            {"i_m", m.body.shape->i_m},
                            {"n_d", m.body.shape->n_d},
                            {"n_es", m.body.shape->n_es}}},
                          {"params", cost_parameters_to_json(*m.body.params)}};
        } else {
            jm["body"] = m.body.fixed;
        }
        j["modules"].push_back(std::move(jm));
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& [from, to] : w.edges)
        j["edges"].push_back({from, to});
    return j;
}

inline WorkflowSpec workflow_from_json(const nlohmann::json& j) {
    WorkflowSpec w;
    try {
        w.label = j.value("label", std::string{});
        for (const auto& jm : j.at("modules")) {
            WorkflowModule m;
            m.name = jm.at("name").get<std::string>();
            m.startup = jm.value("startup", 0.0);
            m.stage_in = jm.value("stage_in", 0.0);
            m.stage_out = jm.value("stage_out", 0.0);
            if (jm.contains("body") && jm.at("body").is_object()) {
                const auto& jb = jm.at("body");
                const auto& js = jb.at("shape");
                WorkloadShape shape;
                shape.n_f = js.at("n_f").get<std::int64_t>();
                shape.i_m = js.at("i_m").get<std::int64_t>();
                shape.n_d = js.at("n_d").get<std::int64_t>();
                shape.n_es = js.at("n_es").get<std::int64_t>();
                m.body.shape = shape;
                m.body.params = cost_parameters_from_json(jb.at("params"));
            } else {
                m.body.fixed = jm.value("body", 0.0);
            }
            w.modules.push_back(std::move(m));
        }
        if (j.contains("edges"))
            for (const auto& je : j.at("edges"))
                w.edges.emplace_back(je.at(0).get<std::string>(),
                                     je.at(1).get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("workflow JSON: ") + e.what());
    }
    w.validate();
    return w;
}

inline nlohmann::json fault_model_to_json(const FaultModel& f) {
    return {{"failure_probability", f.failure_probability},
            {"retry_limit", f.retry_limit},
            {"retry_penalty", f.retry_penalty},
            {"seed", f.seed}};
}

inline FaultModel fault_model_from_json(const nlohmann::json& j) {
    FaultModel f;
    try {
        f.failure_probability = j.value("failure_probability", 0.0);
        f.retry_limit = j.value("retry_limit", 0);
        f.retry_penalty = j.value("retry_penalty", 0.0);
        f.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("fault model JSON: ") + e.what());
    }
    f.validate();
    return f;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "nf,f_m,f_d,f_es,f_total,t_predict,t_simulated\n";
    out.precision(17);
    for (const SweepRow& r : rows)
        out << r.n_f << ',' << r.work.f_m << ',' << r.work.f_d << ',' << r.work.f_es
            << ',' << r.work.f_total << ',' << r.t_predict << ',' << r.t_simulated
            << '\n';
    return out.str();
}

} // namespace fmoperf

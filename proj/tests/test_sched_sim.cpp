// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <fmoperf/presets.hpp>
#include <fmoperf/random.hpp>
#include <fmoperf/sched_sim.hpp>

#include <cmath>

using namespace fmoperf;
using Catch::Matchers::WithinRel;

namespace {

const CostParameters kParams = cost_parameters_preset("paper-tableIV");

TaskList random_task_list(Prng& rng) {
    std::vector<Task> tasks;
    const int phases = 1 + static_cast<int>(rng.next() % 3);
    int id = 0;
    for (int p = 0; p < phases; ++p) {
        const int n = 1 + static_cast<int>(rng.next() % 40);
        for (int t = 0; t < n; ++t)
            tasks.push_back({id++, TaskKind::MonomerIter, rng.uniform(0.05, 4.0), p});
    }
    return task_list_from_tasks(std::move(tasks));
}

} // namespace

TEST_CASE("single worker executes work back to back") {
    std::vector<Task> tasks;
    for (int i = 0; i < 5; ++i)
        tasks.push_back({i, TaskKind::ScfDimer, 2.0, 0});
    const TaskList list = task_list_from_tasks(std::move(tasks));
    const SimReport r = simulate(list, ClusterConfig{1, 1.0, 0.0});
    REQUIRE(r.makespan == 10.0);
    REQUIRE(r.efficiency == 1.0);
}

TEST_CASE("worker speed is folded in at task-build time, not at dispatch") {
    // explicit task durations are wall-clock seconds: simulate ignores E
    std::vector<Task> tasks{{0, TaskKind::ScfDimer, 3.0, 0}};
    const TaskList list = task_list_from_tasks(std::move(tasks));
    REQUIRE(simulate(list, ClusterConfig{1, 0.5, 0.0}).makespan == 3.0);
    REQUIRE(simulate(list, ClusterConfig{1, 1.0, 0.0}).makespan == 3.0);

    // build_tasks divides the per-task work by E
    const WorkloadShape one{1, 1, 0, 0};
    const TaskList slow = build_tasks(one, kParams, ClusterConfig{1, 0.5, 0.0});
    const TaskList fast = build_tasks(one, kParams, ClusterConfig{1, 1.0, 0.0});
    REQUIRE(simulate(slow, ClusterConfig{1, 0.5, 0.0}).makespan ==
            2.0 * simulate(fast, ClusterConfig{1, 1.0, 0.0}).makespan);
}

TEST_CASE("barrier separates phases") {
    std::vector<Task> tasks;
    tasks.push_back({0, TaskKind::MonomerIter, 4.0, 0});
    tasks.push_back({1, TaskKind::MonomerIter, 1.0, 0});
    tasks.push_back({2, TaskKind::ScfDimer, 1.0, 1});
    const SimReport r = simulate(task_list_from_tasks(std::move(tasks)),
                                 ClusterConfig{2, 1.0, 0.0});
    // phase 1 cannot start before the 4 s straggler finishes
    REQUIRE(r.makespan == 5.0);
    REQUIRE(r.phases.size() == 2);
    REQUIRE(r.phases[1].start == 4.0);
}

TEST_CASE("dispatch overhead lengthens every task") {
    std::vector<Task> tasks;
    for (int i = 0; i < 4; ++i)
        tasks.push_back({i, TaskKind::EsDimer, 1.0, 0});
    const SimReport r = simulate(task_list_from_tasks(std::move(tasks)),
                                 ClusterConfig{2, 1.0, 0.5});
    REQUIRE(r.makespan == 3.0);
}

TEST_CASE("exact and aggregate scheduling agree bitwise") {
    // group counts far above K force the closed-form lattice path; the explicit
    // heap path must land on identical doubles, not merely close ones
    Prng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        TaskList list;
        const int phases = 1 + static_cast<int>(rng.next() % 3);
        std::int64_t next_id = 0;
        for (int p = 0; p < phases; ++p) {
            TaskPhase phase;
            const int groups = 1 + static_cast<int>(rng.next() % 3);
            for (int g = 0; g < groups; ++g) {
                const std::int64_t count = 1 + static_cast<std::int64_t>(rng.next() % 5000);
                const double duration = rng.uniform(0.01, 2.0);
                phase.groups.push_back({TaskKind::EsDimer, count, duration, next_id});
                next_id += count;
            }
            list.phases.push_back(std::move(phase));
        }
        const auto k = static_cast<std::int64_t>(1 + rng.next() % 37);
        const ClusterConfig c{k, 1.0, 0.0};

        SimOptions exact;
        exact.exact_threshold = 1'000'000'000;
        SimOptions aggregate;
        aggregate.exact_threshold = 0;

        const SimReport a = simulate(list, c, exact);
        const SimReport b = simulate(list, c, aggregate);
        REQUIRE(a.makespan == b.makespan); // bitwise, not approximately
        for (std::size_t p = 0; p < a.phases.size(); ++p) {
            REQUIRE(a.phases[p].start == b.phases[p].start);
            REQUIRE(a.phases[p].end == b.phases[p].end);
        }
    }
}

TEST_CASE("makespan respects the work and Graham bounds") {
    Prng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const TaskList list = random_task_list(rng);
        const auto k = static_cast<std::int64_t>(1 + rng.next() % 16);
        const ClusterConfig c{k, 1.0, 0.0};
        const SimReport r = simulate(list, c);

        const double kd = static_cast<double>(k);
        REQUIRE(r.makespan >= list.total_work() / kd - 1e-9);

        double bound = 0.0;
        for (const TaskPhase& phase : list.phases) {
            double work = 0.0, longest = 0.0;
            for (const TaskGroup& g : phase.groups) {
                work += g.duration * static_cast<double>(g.count);
                longest = std::max(longest, g.duration);
            }
            bound += work / kd + (1.0 - 1.0 / kd) * longest;
        }
        REQUIRE(r.makespan <= bound + 1e-9);
    }
}

TEST_CASE("LPT beats FIFO on an adversarial ordering") {
    // id order 2,2,3,3,4 on two workers: FIFO ends at 9, LPT at 8
    std::vector<Task> tasks;
    int id = 0;
    for (const double d : {2.0, 2.0, 3.0, 3.0, 4.0})
        tasks.push_back({id++, TaskKind::ScfDimer, d, 0});
    const TaskList list = task_list_from_tasks(std::move(tasks));

    SimOptions lpt;
    lpt.policy = SchedulePolicy::Lpt;
    const SimReport fifo = simulate(list, ClusterConfig{2, 1.0, 0.0});
    const SimReport better = simulate(list, ClusterConfig{2, 1.0, 0.0}, lpt);
    REQUIRE(fifo.makespan == 9.0);
    REQUIRE(better.makespan == 8.0);
}

TEST_CASE("timeline events are deterministic and ordered") {
    std::vector<Task> tasks;
    for (int i = 0; i < 9; ++i)
        tasks.push_back({i, TaskKind::MonomerIter, 0.5 + 0.25 * i, i / 5});
    const TaskList list = task_list_from_tasks(std::move(tasks));
    SimOptions opts;
    opts.record_timeline = true;

    const SimReport a = simulate(list, ClusterConfig{3, 1.0, 0.0}, opts);
    const SimReport b = simulate(list, ClusterConfig{3, 1.0, 0.0}, opts);
    REQUIRE(events_to_csv(a.timeline) == events_to_csv(b.timeline));
    REQUIRE(a.timeline.size() == 18); // start + finish per task

    const std::string csv = events_to_csv(a.timeline);
    REQUIRE(csv.rfind("time,worker,task,kind,event", 0) == 0);

    for (std::size_t i = 1; i < a.timeline.size(); ++i)
        REQUIRE(a.timeline[i - 1].time <= a.timeline[i].time);
}

TEST_CASE("build_tasks lays out monomer phases then one dimer phase") {
    const WorkloadShape shape{10, 3, 20, 25};
    const ClusterConfig c{4, 2.0, 0.0};
    const TaskList list = build_tasks(shape, kParams, c);

    REQUIRE(list.phases.size() == 4); // 3 monomer sweeps + dimers
    for (int p = 0; p < 3; ++p) {
        REQUIRE(list.phases[p].groups.size() == 1);
        REQUIRE(list.phases[p].groups[0].kind == TaskKind::MonomerIter);
        REQUIRE(list.phases[p].groups[0].count == 10);
    }
    REQUIRE(list.phases[3].groups.size() == 2);
    REQUIRE(list.phases[3].groups[0].kind == TaskKind::ScfDimer);
    REQUIRE(list.phases[3].groups[0].count == 20);
    REQUIRE(list.phases[3].groups[1].kind == TaskKind::EsDimer);
    REQUIRE(list.phases[3].groups[1].count == 25);

    // durations are per-task work divided by worker speed
    const double nf = 10.0;
    REQUIRE_THAT(list.phases[0].groups[0].duration,
                 WithinRel((kParams.f_m0 + kParams.f_m1 * nf) / c.e, 1e-15));
    REQUIRE_THAT(list.phases[3].groups[1].duration,
                 WithinRel(kParams.f_es0 / c.e, 1e-15));
}

TEST_CASE("simulated time matches the analytic model when work divides evenly") {
    // 100,000 fragments on 10,000 workers: every phase splits exactly
    const MachineSpec peta = machine_preset("peta-2007");
    const WorkloadShape shape = shape_from_nf(100000, 17, kParams);
    const ClusterConfig c = cluster_from(peta);
    const TaskList list = build_tasks(shape, kParams, c);
    const SimReport r = simulate(list, c);
    REQUIRE_THAT(r.makespan, WithinRel(predict_elapsed(shape, kParams, peta), 1e-9));
    REQUIRE(r.efficiency == 1.0);
}

TEST_CASE("duration jitter is seeded and bounded") {
    const WorkloadShape shape{40, 2, 100, 200};
    const ClusterConfig c{8, 1.0, 0.0};
    JitterOptions j;
    j.amplitude = 0.3;
    j.seed = 5;

    const TaskList a = build_tasks(shape, kParams, c, j);
    const TaskList b = build_tasks(shape, kParams, c, j);
    j.seed = 6;
    const TaskList d = build_tasks(shape, kParams, c, j);

    REQUIRE(a.total_work() == b.total_work());
    REQUIRE(a.total_work() != d.total_work());

    const double base = (kParams.f_m0 + kParams.f_m1 * 40.0) / c.e;
    for (const TaskGroup& g : a.phases[0].groups) {
        REQUIRE(g.count == 1); // jitter materializes singleton groups
        REQUIRE(g.duration >= base * 0.7 - 1e-12);
        REQUIRE(g.duration <= base * 1.3 + 1e-12);
    }
}

TEST_CASE("lc-fmo-1cew workflow reproduces the pipeline stage times") {
    const ClusterConfig c{1, 1.0, 0.0};
    const SimReport lc = simulate_workflow(workflow_preset("lc-fmo-1cew"), c);
    const SimReport mono = simulate_workflow(workflow_preset("monolithic-1cew"), c);

    REQUIRE(lc.modules.size() == 4);
    const double expected[] = {37.0, 4260.0, 8160.0, 4.0};
    for (std::size_t i = 0; i < 4; ++i)
        REQUIRE_THAT(lc.modules[i].end - lc.modules[i].start,
                     WithinRel(expected[i], 1e-12));

    REQUIRE_THAT(lc.makespan, WithinRel(12461.0, 1e-12));
    REQUIRE_THAT(mono.makespan, WithinRel(11404.0, 1e-12));
    REQUIRE_THAT(lc.makespan / mono.makespan, WithinRel(1.09269, 1e-4));
    REQUIRE(std::abs(lc.makespan / mono.makespan - 1.095) < 0.02);
}

TEST_CASE("workflow failures retry at module granularity") {
    WorkflowSpec w = workflow_preset("lc-fmo-1cew");
    const ClusterConfig c{1, 1.0, 0.0};

    SECTION("zero failure probability never retries") {
        FaultModel f;
        f.failure_probability = 0.0;
        const SimReport r = simulate_workflow(w, c, f);
        REQUIRE(r.retries == 0);
        REQUIRE(r.completed);
        for (const ModuleStat& m : r.modules)
            REQUIRE(m.attempts == 1);
    }

    SECTION("certain failure exhausts the retry budget and truncates") {
        FaultModel f;
        f.failure_probability = 0.999999;
        f.retry_limit = 2;
        f.seed = 1;
        const SimReport r = simulate_workflow(w, c, f);
        REQUIRE_FALSE(r.completed);
        REQUIRE(r.modules.front().attempts == 3); // 1 try + 2 retries
        REQUIRE_FALSE(r.modules.front().completed);
        REQUIRE(r.modules.size() == 1); // later modules never start
        REQUIRE(r.efficiency <= 1.0);
    }

    SECTION("retry penalty stretches the makespan deterministically") {
        FaultModel f;
        f.failure_probability = 0.4;
        f.retry_limit = 8;
        f.retry_penalty = 100.0;
        f.seed = 77;
        const SimReport a = simulate_workflow(w, c, f);
        const SimReport b = simulate_workflow(w, c, f);
        REQUIRE(a.makespan == b.makespan);
        REQUIRE(a.retries == b.retries);
        if (a.retries > 0)
            REQUIRE(a.makespan > 12461.0);
    }
}

TEST_CASE("workflow modules wait for their predecessors") {
    WorkflowSpec w;
    w.label = "diamond";
    const auto fixed = [](const char* name, double body) {
        WorkflowModule m;
        m.name = name;
        m.body.fixed = body;
        return m;
    };
    w.modules = {fixed("a", 10), fixed("b", 5), fixed("c", 20), fixed("d", 1)};
    w.edges = {{"a", "b"}, {"a", "c"}, {"b", "d"}, {"c", "d"}};

    const SimReport r = simulate_workflow(w, ClusterConfig{1, 1.0, 0.0});
    REQUIRE(r.modules.size() == 4);
    // single shared cluster: modules serialize in topological order
    REQUIRE_THAT(r.makespan, WithinRel(36.0, 1e-12));
    REQUIRE(r.modules.back().start >= r.modules[1].end);
    REQUIRE(r.modules.back().start >= r.modules[2].end);
}

TEST_CASE("workflow validation") {
    WorkflowSpec w = workflow_preset("lc-fmo-1cew");

    SECTION("cycle") {
        w.edges.push_back({"total-energy", "init"});
        REQUIRE_THROWS_AS(w.validate(), DagError);
    }
    SECTION("unknown edge endpoint") {
        w.edges.push_back({"init", "nonesuch"});
        REQUIRE_THROWS_AS(w.validate(), DagError);
    }
    SECTION("duplicate module name") {
        w.modules.push_back(w.modules.front());
        REQUIRE_THROWS_AS(w.validate(), ValidationError);
    }
    SECTION("negative overhead") {
        w.modules.front().startup = -1.0;
        REQUIRE_THROWS_AS(w.validate(), ValidationError);
    }
}

TEST_CASE("workflow JSON round-trip") {
    const WorkflowSpec w = workflow_preset("lc-fmo-1cew");
    const WorkflowSpec r = workflow_from_json(workflow_to_json(w));
    REQUIRE(r.label == w.label);
    REQUIRE(r.modules.size() == w.modules.size());
    REQUIRE(r.edges == w.edges);
    for (std::size_t i = 0; i < w.modules.size(); ++i) {
        REQUIRE(r.modules[i].name == w.modules[i].name);
        REQUIRE(r.modules[i].startup == w.modules[i].startup);
        REQUIRE(r.modules[i].body.fixed == w.modules[i].body.fixed);
    }

    // population-body modules survive the round-trip too
    WorkflowSpec pop;
    pop.label = "pop";
    WorkflowModule m;
    m.name = "dimers";
    m.body.shape = WorkloadShape{50, 2, 375, 850};
    m.body.params = kParams;
    pop.modules.push_back(m);
    const WorkflowSpec back = workflow_from_json(workflow_to_json(pop));
    REQUIRE(back.modules[0].body.is_population());
    REQUIRE(back.modules[0].body.shape->n_es == 850);
}

TEST_CASE("population-body workflow uses the scheduler inside the module") {
    WorkflowSpec w;
    w.label = "population";
    WorkflowModule m;
    m.name = "dimers";
    m.stage_in = 10.0;
    m.body.shape = WorkloadShape{50, 1, 375, 850};
    m.body.params = kParams;
    w.modules.push_back(m);

    const ClusterConfig c{16, 1.0, 0.0};
    const SimReport r = simulate_workflow(w, c);
    const TaskList body = build_tasks(*w.modules[0].body.shape, kParams, c);
    const SimReport inner = simulate(body, c);
    REQUIRE_THAT(r.makespan, WithinRel(10.0 + inner.makespan, 1e-12));
}

TEST_CASE("efficiency sweep rows are self-consistent") {
    const MachineSpec peta = machine_preset("peta-2007");
    const std::vector<std::int64_t> nfs{1000, 2000, 5000};
    const std::vector<SweepRow> rows = efficiency_sweep(nfs, 17, kParams, peta);
    REQUIRE(rows.size() == 3);
    for (const SweepRow& row : rows) {
        REQUIRE(row.t_simulated >= row.t_predict - 1e-9);
        REQUIRE(row.efficiency > 0.0);
        REQUIRE(row.efficiency <= 1.0);
        REQUIRE_THAT(row.efficiency, WithinRel(row.t_predict / row.t_simulated, 1e-9));
    }

    const std::string csv = sweep_to_csv(rows);
    REQUIRE(csv.rfind("nf,f_m,f_d,f_es,f_total,t_predict,t_simulated", 0) == 0);
}

TEST_CASE("cluster validation bounds") {
    REQUIRE_THROWS_AS((ClusterConfig{0, 1.0, 0.0}).validate(), ValidationError);
    REQUIRE_THROWS_AS((ClusterConfig{2'000'000, 1.0, 0.0}).validate(),
                      ValidationError);
    REQUIRE_THROWS_AS((ClusterConfig{4, -1.0, 0.0}).validate(), ValidationError);
    REQUIRE_THROWS_AS((ClusterConfig{4, 1.0, -0.5}).validate(), ValidationError);
}

TEST_CASE("fault model validation") {
    FaultModel f;
    f.failure_probability = 1.0;
    REQUIRE_THROWS_AS(f.validate(), ValidationError);
    f.failure_probability = 0.5;
    f.retry_limit = -1;
    REQUIRE_THROWS_AS(f.validate(), ValidationError);
}

// SPDX-License-Identifier: Apache-2.0
//
// Compares the loosely-coupled 1cew pipeline against the monolithic run and
// prints the staging-overhead ratio.

#include <cstdio>

#include <fmoperf/fmoperf.hpp>

int main() {
    const fmoperf::ClusterConfig cluster{1, 1.0, 0.0};

    const fmoperf::SimReport lc =
        fmoperf::simulate_workflow(fmoperf::workflow_preset("lc-fmo-1cew"), cluster);
    const fmoperf::SimReport mono =
        fmoperf::simulate_workflow(fmoperf::workflow_preset("monolithic-1cew"), cluster);

    std::printf("%-16s %10s\n", "module", "time [s]");
    for (const fmoperf::ModuleStat& m : lc.modules)
        std::printf("%-16s %10.1f\n", m.name.c_str(), m.end - m.start);
    std::printf("loosely coupled total: %.1f s\n", lc.makespan);
    std::printf("monolithic total:      %.1f s\n", mono.makespan);
    std::printf("overhead ratio:        %.4f\n", lc.makespan / mono.makespan);
    return 0;
}

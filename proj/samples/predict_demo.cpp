// SPDX-License-Identifier: Apache-2.0
//
// Predicts elapsed time for a 100,000-fragment workload on the bundled
// machine presets.

#include <cstdio>

#include <fmoperf/fmoperf.hpp>

int main() {
    const fmoperf::CostParameters params =
        fmoperf::cost_parameters_preset("paper-tableIV");
    const fmoperf::WorkloadShape shape = fmoperf::shape_from_nf(100000, 17, params);
    const fmoperf::WorkBreakdown work = fmoperf::work_total(shape, params);

    std::printf("shape: n_f=%lld n_d=%lld n_es=%lld\n",
                static_cast<long long>(shape.n_f), static_cast<long long>(shape.n_d),
                static_cast<long long>(shape.n_es));
    std::printf("work: %.6g reference-node-seconds\n", work.f_total);

    for (const char* name : {"ibm-p5-node", "xeon-16", "peta-2007"}) {
        const fmoperf::MachineSpec m = fmoperf::machine_preset(name);
        std::printf("%-12s K=%-6lld E=%-6g elapsed %.6g s\n", name,
                    static_cast<long long>(m.k), m.e,
                    fmoperf::predict_elapsed(shape, params, m));
    }
    return 0;
}

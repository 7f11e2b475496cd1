// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header: the whole library.

#pragma once

#include "fmoperf/calibrator.hpp"
#include "fmoperf/cost_model.hpp"
#include "fmoperf/errors.hpp"
#include "fmoperf/fragment_system.hpp"
#include "fmoperf/presets.hpp"
#include "fmoperf/random.hpp"
#include "fmoperf/sched_sim.hpp"
#include "fmoperf/toy_engine.hpp"

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/agents.hpp"
#include "iotsched/baseline.hpp"
#include "iotsched/benchmark_solver.hpp"
#include "iotsched/channel.hpp"
#include "iotsched/common.hpp"
#include "iotsched/harness.hpp"
#include "iotsched/link_adaptation.hpp"
#include "iotsched/metrics.hpp"
#include "iotsched/nn.hpp"

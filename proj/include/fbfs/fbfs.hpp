#pragma once

#include "bench.hpp"
#include "clocked_run.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "learner.hpp"
#include "selector.hpp"
#include "simulator.hpp"
#include "store.hpp"

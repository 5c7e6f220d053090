#pragma once

#include "attacks.hpp"
#include "baselines.hpp"
#include "config.hpp"
#include "datasets.hpp"
#include "dictionaries.hpp"
#include "engine.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "mlp.hpp"
#include "problems.hpp"
#include "rng.hpp"
#include "schedules.hpp"
#include "sim.hpp"
#include "vector_ops.hpp"

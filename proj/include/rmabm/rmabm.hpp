#pragma once

#include "rmabm/analysis.hpp"
#include "rmabm/economy.hpp"
#include "rmabm/errors.hpp"
#include "rmabm/harness.hpp"
#include "rmabm/heuristic.hpp"
#include "rmabm/manifest.hpp"
#include "rmabm/metrics.hpp"
#include "rmabm/params.hpp"
#include "rmabm/qlearning.hpp"
#include "rmabm/rng.hpp"
#include "rmabm/types.hpp"
#include "rmabm/util.hpp"

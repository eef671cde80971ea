#pragma once

#include <escapesim/analytics.hpp>
#include <escapesim/engine.hpp>
#include <escapesim/montecarlo.hpp>
#include <escapesim/params.hpp>
#include <escapesim/rng.hpp>
#include <escapesim/stats.hpp>
#include <escapesim/sweep.hpp>
#include <escapesim/validation.hpp>

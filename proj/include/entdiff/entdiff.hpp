#pragma once

// Umbrella header for the whole library.

#include "entdiff/checkpoint.hpp"
#include "entdiff/config.hpp"
#include "entdiff/csv.hpp"
#include "entdiff/dataset.hpp"
#include "entdiff/errors.hpp"
#include "entdiff/guidance.hpp"
#include "entdiff/linalg.hpp"
#include "entdiff/metrics.hpp"
#include "entdiff/mlp.hpp"
#include "entdiff/rng.hpp"
#include "entdiff/samplers.hpp"
#include "entdiff/schedule.hpp"
#include "entdiff/training.hpp"

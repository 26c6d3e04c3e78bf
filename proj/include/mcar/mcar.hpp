#pragma once

// Umbrella header.

#include "mcar/closedform.hpp"
#include "mcar/crit.hpp"
#include "mcar/geometry.hpp"
#include "mcar/infer.hpp"
#include "mcar/ingest.hpp"
#include "mcar/json_io.hpp"
#include "mcar/lp.hpp"
#include "mcar/model.hpp"
#include "mcar/reduce.hpp"
#include "mcar/rng.hpp"
#include "mcar/sim.hpp"

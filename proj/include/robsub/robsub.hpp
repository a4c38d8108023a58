#pragma once

// Umbrella header for the robust subspace toolkit.

#include "robsub/batch.hpp"
#include "robsub/datagen.hpp"
#include "robsub/io.hpp"
#include "robsub/kernel.hpp"
#include "robsub/ops.hpp"
#include "robsub/parallel.hpp"
#include "robsub/path.hpp"
#include "robsub/rank.hpp"
#include "robsub/rng.hpp"
#include "robsub/tracker.hpp"
#include "robsub/types.hpp"

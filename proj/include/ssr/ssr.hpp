// Umbrella header for the sequential sparse recovery toolkit.
#pragma once

#include "ssr/checkpoint.hpp"
#include "ssr/config.hpp"
#include "ssr/datagen.hpp"
#include "ssr/dictionary.hpp"
#include "ssr/gradcheck.hpp"
#include "ssr/instances.hpp"
#include "ssr/linalg.hpp"
#include "ssr/measurement.hpp"
#include "ssr/pgm.hpp"
#include "ssr/rng.hpp"
#include "ssr/solvers.hpp"
#include "ssr/ssr1.hpp"
#include "ssr/training.hpp"
#include "ssr/unfolded.hpp"

#pragma once

// Umbrella header for the generalized correlation regression toolkit.

#include "gcr/corr_manifold.hpp"
#include "gcr/dataset.hpp"
#include "gcr/diagnostics.hpp"
#include "gcr/error.hpp"
#include "gcr/evalkit.hpp"
#include "gcr/exp_family.hpp"
#include "gcr/fitter.hpp"
#include "gcr/formula.hpp"
#include "gcr/inference.hpp"
#include "gcr/rng.hpp"
#include "gcr/simgen.hpp"
#include "gcr/stats.hpp"
#include "gcr/vecl.hpp"
#include "gcr/version.hpp"

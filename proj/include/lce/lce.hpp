#pragma once

/// Umbrella header for the whole library.

#include "lce/errors.hpp"
#include "lce/tensor_core.hpp"
#include "lce/energy_model.hpp"
#include "lce/discretization.hpp"
#include "lce/field_io.hpp"
#include "lce/minimizer.hpp"
#include "lce/injectivity.hpp"
#include "lce/experiments.hpp"

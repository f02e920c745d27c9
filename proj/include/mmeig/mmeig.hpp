#ifndef MMEIG_MMEIG_HPP
#define MMEIG_MMEIG_HPP

#include "core.hpp"
#include "random.hpp"
#include "model.hpp"
#include "posterior.hpp"
#include "optimize.hpp"
#include "mode_atlas.hpp"
#include "parallel.hpp"
#include "estimators.hpp"
#include "benchmarks.hpp"
#include "harness.hpp"
#include "validation.hpp"

#endif  // MMEIG_MMEIG_HPP

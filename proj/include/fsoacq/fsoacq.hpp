#pragma once

#include "fsoacq/errors.hpp"
#include "fsoacq/numerics.hpp"
#include "fsoacq/detection.hpp"
#include "fsoacq/region.hpp"
#include "fsoacq/adaptive_spiral.hpp"
#include "fsoacq/shotgun.hpp"
#include "fsoacq/random.hpp"
#include "fsoacq/montecarlo.hpp"
#include "fsoacq/ga_optimizer.hpp"

#pragma once

// Umbrella header.

#include "lcl/cli.hpp"
#include "lcl/distributions.hpp"
#include "lcl/experiments.hpp"
#include "lcl/localization.hpp"
#include "lcl/metrics.hpp"
#include "lcl/posterior.hpp"
#include "lcl/report.hpp"
#include "lcl/rng.hpp"
#include "lcl/sde.hpp"
#include "lcl/special.hpp"
#include "lcl/stein.hpp"

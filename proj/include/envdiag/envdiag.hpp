#pragma once

#include "envdiag/calibrate.hpp"
#include "envdiag/classify.hpp"
#include "envdiag/envspec.hpp"
#include "envdiag/error.hpp"
#include "envdiag/faultfreq.hpp"
#include "envdiag/io.hpp"
#include "envdiag/parallel.hpp"
#include "envdiag/rng.hpp"
#include "envdiag/sigmodel.hpp"
#include "envdiag/stats.hpp"

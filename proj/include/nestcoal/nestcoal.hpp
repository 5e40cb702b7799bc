#pragma once

#include "dist.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "pgf.hpp"
#include "rde.hpp"
#include "rng.hpp"
#include "sim.hpp"
#include "stats.hpp"

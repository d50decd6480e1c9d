#pragma once

#include "dytb/accretive.hpp"
#include "dytb/corona.hpp"
#include "dytb/dyadic.hpp"
#include "dytb/experiment.hpp"
#include "dytb/grid_io.hpp"
#include "dytb/perfect_kernel.hpp"
#include "dytb/rng.hpp"
#include "dytb/twisted.hpp"
#include "dytb/verifier.hpp"
#include "dytb/version.hpp"

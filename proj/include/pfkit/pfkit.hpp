#pragma once

// Umbrella header: the whole toolkit.

#include "pfkit/config.hpp"
#include "pfkit/diagnostics.hpp"
#include "pfkit/errors.hpp"
#include "pfkit/fft.hpp"
#include "pfkit/geometry.hpp"
#include "pfkit/grid.hpp"
#include "pfkit/harness.hpp"
#include "pfkit/integrators.hpp"
#include "pfkit/io.hpp"
#include "pfkit/krylov.hpp"
#include "pfkit/model.hpp"
#include "pfkit/operators.hpp"
#include "pfkit/potential.hpp"

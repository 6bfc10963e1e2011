#pragma once

#include "pdaexp/dae_flow.hpp"
#include "pdaexp/error.hpp"
#include "pdaexp/expm.hpp"
#include "pdaexp/fem.hpp"
#include "pdaexp/harness.hpp"
#include "pdaexp/integrators.hpp"
#include "pdaexp/linalg.hpp"
#include "pdaexp/matrix_market.hpp"
#include "pdaexp/problems.hpp"

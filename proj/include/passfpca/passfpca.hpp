#pragma once

#include "passfpca/eigenratio.hpp"
#include "passfpca/errors.hpp"
#include "passfpca/estimators.hpp"
#include "passfpca/grid.hpp"
#include "passfpca/metrics.hpp"
#include "passfpca/quadrature.hpp"
#include "passfpca/simgen.hpp"
#include "passfpca/smoothing.hpp"

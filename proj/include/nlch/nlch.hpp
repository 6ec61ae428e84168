#pragma once

#include "nlch/error.hpp"
#include "nlch/grid.hpp"
#include "nlch/kernels.hpp"
#include "nlch/constitutive.hpp"
#include "nlch/linalg.hpp"
#include "nlch/forward.hpp"
#include "nlch/sensitivity.hpp"
#include "nlch/inverse.hpp"
#include "nlch/io.hpp"
#include "nlch/config.hpp"

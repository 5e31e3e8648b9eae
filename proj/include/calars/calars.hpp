#pragma once

#include "calars/blars.hpp"
#include "calars/comm.hpp"
#include "calars/dataset.hpp"
#include "calars/error.hpp"
#include "calars/exact_sum.hpp"
#include "calars/lars.hpp"
#include "calars/linalg.hpp"
#include "calars/matrix.hpp"
#include "calars/metrics.hpp"
#include "calars/path.hpp"
#include "calars/tblars.hpp"

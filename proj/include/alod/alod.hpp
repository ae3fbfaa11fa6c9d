#pragma once

#include "alod/geometry.hpp"
#include "alod/records.hpp"
#include "alod/scoring.hpp"
#include "alod/selection.hpp"
#include "alod/evaluation.hpp"
#include "alod/simharness.hpp"

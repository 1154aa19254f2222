#pragma once

#include "sdfl/core.hpp"
#include "sdfl/diagnostics.hpp"
#include "sdfl/errors.hpp"
#include "sdfl/optimizer.hpp"
#include "sdfl/oracle.hpp"
#include "sdfl/problems.hpp"
#include "sdfl/rng.hpp"

#pragma once

#include "drawdown/numerics.hpp"
#include "drawdown/model.hpp"
#include "drawdown/scale.hpp"
#include "drawdown/policy.hpp"
#include "drawdown/simulate.hpp"
#include "drawdown/oracle.hpp"

#pragma once

#include "ttsysid/solvers/als.hpp"
#include "ttsysid/solvers/config.hpp"
#include "ttsysid/solvers/local_solve.hpp"
#include "ttsysid/solvers/salsa.hpp"
#include "ttsysid/solvers/stack_engine.hpp"

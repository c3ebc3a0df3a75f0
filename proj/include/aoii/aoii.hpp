#pragma once

#include "aoii/cycle_model.hpp"
#include "aoii/errors.hpp"
#include "aoii/generator.hpp"
#include "aoii/phase_type.hpp"
#include "aoii/simulator.hpp"
#include "aoii/solver.hpp"

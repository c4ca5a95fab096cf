#pragma once

#include "trapspec/constants.hpp"
#include "trapspec/error.hpp"
#include "trapspec/inversion.hpp"
#include "trapspec/io.hpp"
#include "trapspec/noise_harness.hpp"
#include "trapspec/parallel.hpp"
#include "trapspec/rabi_sim.hpp"
#include "trapspec/scattering_model.hpp"
#include "trapspec/special_fn.hpp"
#include "trapspec/trap_model.hpp"
#include "trapspec/varpro.hpp"
#include "trapspec/version.hpp"

#pragma once

#include "parc2/tensor.hpp"
#include "parc2/ops.hpp"
#include "parc2/oracle.hpp"
#include "parc2/lowering.hpp"
#include "parc2/blocks.hpp"
#include "parc2/bench.hpp"
#include "parc2/checkpoint.hpp"
#include "parc2/suites.hpp"

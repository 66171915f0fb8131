#pragma once

#include "splatkit/grid.hpp"
#include "splatkit/io.hpp"
#include "splatkit/metrics.hpp"
#include "splatkit/parallel.hpp"
#include "splatkit/splat.hpp"
#include "splatkit/synth.hpp"
#include "splatkit/synthetic.hpp"
#include "splatkit/upsample.hpp"
#include "splatkit/warp.hpp"

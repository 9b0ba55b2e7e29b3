#pragma once

#include "cngp/adam.hpp"
#include "cngp/codebooks.hpp"
#include "cngp/encoding.hpp"
#include "cngp/error.hpp"
#include "cngp/grid.hpp"
#include "cngp/hyperparams.hpp"
#include "cngp/image.hpp"
#include "cngp/kv_config.hpp"
#include "cngp/metrics.hpp"
#include "cngp/mlp.hpp"
#include "cngp/model.hpp"
#include "cngp/model_io.hpp"
#include "cngp/parallel.hpp"
#include "cngp/sweep.hpp"
#include "cngp/trainer.hpp"

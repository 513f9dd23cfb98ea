// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tnt/checkpoint.hpp"
#include "tnt/config.hpp"
#include "tnt/einsum.hpp"
#include "tnt/errors.hpp"
#include "tnt/metrics.hpp"
#include "tnt/model.hpp"
#include "tnt/optimizer.hpp"
#include "tnt/path_planner.hpp"
#include "tnt/rank_optimizer.hpp"
#include "tnt/rng.hpp"
#include "tnt/run.hpp"
#include "tnt/tasks.hpp"
#include "tnt/tensor.hpp"
#include "tnt/trainer.hpp"
#include "tnt/tt.hpp"
#include "tnt/tt_linear.hpp"
#include "tnt/ttm_embedding.hpp"

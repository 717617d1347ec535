#pragma once

#include "sacn/baselines.hpp"
#include "sacn/config.hpp"
#include "sacn/conv_transe.hpp"
#include "sacn/diagnostics.hpp"
#include "sacn/error.hpp"
#include "sacn/evaluation.hpp"
#include "sacn/graph_adjacency.hpp"
#include "sacn/kg_data.hpp"
#include "sacn/model.hpp"
#include "sacn/nn/adam.hpp"
#include "sacn/nn/checkpoint.hpp"
#include "sacn/nn/grad_check.hpp"
#include "sacn/nn/ops.hpp"
#include "sacn/nn/parameter.hpp"
#include "sacn/nn/tape.hpp"
#include "sacn/tensor.hpp"
#include "sacn/training.hpp"
#include "sacn/wgcn_encoder.hpp"

#pragma once

#include "scbridge/bridge_continuous.hpp"
#include "scbridge/bridge_discrete.hpp"
#include "scbridge/checkpoint.hpp"
#include "scbridge/conditioning.hpp"
#include "scbridge/dataset.hpp"
#include "scbridge/errors.hpp"
#include "scbridge/metrics.hpp"
#include "scbridge/model.hpp"
#include "scbridge/nn.hpp"
#include "scbridge/optimizer.hpp"
#include "scbridge/ot.hpp"
#include "scbridge/training.hpp"
#include "scbridge/types.hpp"

#pragma once

#include "tactfl/aggregate.hpp"
#include "tactfl/config.hpp"
#include "tactfl/contrastive.hpp"
#include "tactfl/data.hpp"
#include "tactfl/errors.hpp"
#include "tactfl/federation.hpp"
#include "tactfl/model.hpp"
#include "tactfl/partition.hpp"
#include "tactfl/rng.hpp"
#include "tactfl/tensor.hpp"

#pragma once

#include "scino/core/error.hpp"
#include "scino/core/random.hpp"
#include "scino/data/dag.hpp"
#include "scino/data/dataset.hpp"
#include "scino/data/generate.hpp"
#include "scino/data/io.hpp"
#include "scino/diffcore/fft.hpp"
#include "scino/diffcore/hyperdual.hpp"
#include "scino/diffcore/tape.hpp"
#include "scino/diffcore/tensor.hpp"
#include "scino/diffusion/train.hpp"
#include "scino/ensemble/control.hpp"
#include "scino/ensemble/evidence.hpp"
#include "scino/ensemble/prior.hpp"
#include "scino/metrics/metrics.hpp"
#include "scino/net/network.hpp"
#include "scino/ordering/deciduous.hpp"
#include "scino/ordering/order.hpp"
#include "scino/pruning/prune.hpp"
#include "scino/stein/probe.hpp"
#include "scino/stein/stein.hpp"

#pragma once

// Umbrella header.

#include "ncplr/clustering.hpp"
#include "ncplr/common.hpp"
#include "ncplr/config.hpp"
#include "ncplr/data.hpp"
#include "ncplr/encoder.hpp"
#include "ncplr/eval.hpp"
#include "ncplr/experiments.hpp"
#include "ncplr/graph.hpp"
#include "ncplr/losses.hpp"
#include "ncplr/refinement.hpp"
#include "ncplr/trainer.hpp"

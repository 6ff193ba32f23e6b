#pragma once

// Umbrella header for the Bayesian symbolic-regression library.

#include "bms/canonical.hpp"
#include "bms/config.hpp"
#include "bms/dataset.hpp"
#include "bms/elementary.hpp"
#include "bms/ensemble.hpp"
#include "bms/equivalence.hpp"
#include "bms/evaluate.hpp"
#include "bms/model_fit.hpp"
#include "bms/moves.hpp"
#include "bms/opset.hpp"
#include "bms/optimize.hpp"
#include "bms/parse.hpp"
#include "bms/prior.hpp"
#include "bms/prior_fit.hpp"
#include "bms/restricted.hpp"
#include "bms/sampler.hpp"
#include "bms/synthetic.hpp"
#include "bms/trace.hpp"
#include "bms/tree.hpp"

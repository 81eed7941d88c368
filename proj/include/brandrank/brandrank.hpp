#pragma once

// Umbrella header for the brand-level ranking pipeline.

#include "brandrank/activations.hpp"
#include "brandrank/adagrad.hpp"
#include "brandrank/csv.hpp"
#include "brandrank/dataset.hpp"
#include "brandrank/errors.hpp"
#include "brandrank/eval.hpp"
#include "brandrank/features.hpp"
#include "brandrank/gradcheck.hpp"
#include "brandrank/loss.hpp"
#include "brandrank/matrix.hpp"
#include "brandrank/model.hpp"
#include "brandrank/model_gradcheck.hpp"
#include "brandrank/rng.hpp"
#include "brandrank/synth.hpp"
#include "brandrank/train.hpp"

#pragma once

// Umbrella header for the motion signature library: skeletal sequence
// ingestion, trajectory features, the Siamese recurrent encoder, retrieval
// index, evaluation metrics and sub-motion search.

#include "deephums/augment.hpp"
#include "deephums/common.hpp"
#include "deephums/dtw.hpp"
#include "deephums/encoder.hpp"
#include "deephums/evaluation.hpp"
#include "deephums/features.hpp"
#include "deephums/index.hpp"
#include "deephums/losses.hpp"
#include "deephums/normalize.hpp"
#include "deephums/numeric.hpp"
#include "deephums/params_io.hpp"
#include "deephums/rng.hpp"
#include "deephums/sequence_io.hpp"
#include "deephums/skeleton.hpp"
#include "deephums/submotion.hpp"
#include "deephums/synth.hpp"
#include "deephums/training.hpp"

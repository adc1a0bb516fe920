#pragma once

// Mixed-frequency video question answering: query-grounded dense sampling,
// cross-frequency attention mixing, the discretized temporal text protocol,
// two-round inference, evaluation metrics, and corpus construction.

#include "mixfreq/errors.hpp"
#include "mixfreq/rng.hpp"
#include "mixfreq/matrix.hpp"
#include "mixfreq/sampling.hpp"
#include "mixfreq/encoding.hpp"
#include "mixfreq/mixer.hpp"
#include "mixfreq/grounding.hpp"
#include "mixfreq/pipeline.hpp"
#include "mixfreq/metrics.hpp"
#include "mixfreq/corpus.hpp"
#include "mixfreq/records.hpp"

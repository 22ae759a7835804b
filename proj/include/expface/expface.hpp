#pragma once

// Everything in one include.

#include "expface/analysis.hpp"
#include "expface/angle.hpp"
#include "expface/batch.hpp"
#include "expface/error.hpp"
#include "expface/gradient.hpp"
#include "expface/loss_spec.hpp"
#include "expface/noise_sim.hpp"
#include "expface/root_finding.hpp"
#include "expface/similarity.hpp"
#include "expface/io/config.hpp"
#include "expface/io/csv.hpp"
#include "expface/io/run.hpp"
#include "expface/io/svg.hpp"

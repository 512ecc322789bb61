#pragma once

#include "damsl/baselines.hpp"
#include "damsl/checkpoint.hpp"
#include "damsl/config.hpp"
#include "damsl/engine.hpp"
#include "damsl/episode.hpp"
#include "damsl/errors.hpp"
#include "damsl/featurebank.hpp"
#include "damsl/gnn.hpp"
#include "damsl/gradcheck.hpp"
#include "damsl/layers.hpp"
#include "damsl/loss.hpp"
#include "damsl/matrix.hpp"
#include "damsl/optim.hpp"
#include "damsl/rng.hpp"
#include "damsl/scorer.hpp"

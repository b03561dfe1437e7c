#ifndef LLMO_LLMO_HPP
#define LLMO_LLMO_HPP

#include "llmo/agents.hpp"
#include "llmo/baselines.hpp"
#include "llmo/errors.hpp"
#include "llmo/experiment.hpp"
#include "llmo/grid.hpp"
#include "llmo/http_agent.hpp"
#include "llmo/markov.hpp"
#include "llmo/markov_mc.hpp"
#include "llmo/matrix.hpp"
#include "llmo/optimizer.hpp"
#include "llmo/population.hpp"
#include "llmo/prompt.hpp"
#include "llmo/rewards.hpp"
#include "llmo/rng.hpp"
#include "llmo/trace.hpp"

#endif

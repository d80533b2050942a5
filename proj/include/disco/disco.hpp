#pragma once

#include "disco/curriculum.hpp"
#include "disco/embedding.hpp"
#include "disco/error.hpp"
#include "disco/flow_sim.hpp"
#include "disco/grpo.hpp"
#include "disco/metrics.hpp"
#include "disco/records.hpp"
#include "disco/rewards.hpp"
#include "disco/rng.hpp"
#include "disco/toy_policy.hpp"

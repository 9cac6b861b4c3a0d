#pragma once

#include "unitdiff/types.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace unitdiff {

using Rng = std::mt19937_64;

// Sub-seed for a named component: splitmix64(seed ^ fnv1a64(name)).
// Every stochastic component derives its stream from the global seed this
// way, so each one is reproducible on its own.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

// Sub-seed for the index-th draw of a component (per step, per example).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// rows x cols matrix of independent standard normal draws.
Matrix standard_normal(int rows, int cols, std::uint64_t seed);
Matrix standard_normal(int rows, int cols, Rng& rng);

}  // namespace unitdiff

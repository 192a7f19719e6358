#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace glmmlasso {

// std::mt19937_64 output is fixed by the standard; distributions come from
// boost so draws agree across standard libraries.
using Engine = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Independent stream for (seed, stream index).
Engine make_engine(std::uint64_t seed, std::uint64_t stream);

// Uniform random permutation of 0..n-1 (Fisher-Yates).
std::vector<int> permutation(int n, Engine& eng);

}  // namespace glmmlasso

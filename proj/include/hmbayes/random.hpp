#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace hmb {

using Rng = std::mt19937_64;

// Independent stream seed for a named stage, derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n);

} // namespace hmb

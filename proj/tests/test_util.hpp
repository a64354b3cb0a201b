#pragma once

#include "cotmorse/loopspace.hpp"

#include <Eigen/Dense>

#include <random>

namespace testutil {

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> N01;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * N01(rng);
  return v;
}

inline cotmorse::FourierLoop random_loop(std::mt19937_64& rng, int n, int K, double scale = 1.0) {
  return cotmorse::FourierLoop(n, K, random_vector(rng, static_cast<Eigen::Index>(n) * cotmorse::block_count(K), scale));
}

}  // namespace testutil

#pragma once

// Shared generators for the test suites.

#include <random>

#include "qso_lab/simplex.hpp"
#include "qso_lab/tensor.hpp"

namespace qso::testing {

/// Random heredity tensor: each unordered pair (i, j) gets an independent
/// uniform draw from the simplex as its offspring distribution.
template <class Rng>
HeredityTensor random_tensor(std::size_t m, Rng& rng) {
  CubicArray p(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      const SimplexPoint row = sample_uniform(m, rng);
      for (std::size_t k = 0; k < m; ++k) p.set_sym(i, j, k, row[k]);
    }
  return HeredityTensor::make(std::move(p));
}

/// Random tensor with every entry at least `floor` (floor * m < 1).
template <class Rng>
HeredityTensor random_tensor_above(std::size_t m, double floor, Rng& rng) {
  CubicArray p(m);
  const double rest = 1.0 - floor * static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      const SimplexPoint row = sample_uniform(m, rng);
      for (std::size_t k = 0; k < m; ++k) p.set_sym(i, j, k, floor + rest * row[k]);
    }
  return HeredityTensor::make(std::move(p), TensorPolicy::repair);
}

}  // namespace qso::testing

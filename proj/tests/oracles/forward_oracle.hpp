#pragma once

// Second forward pass that reads the model only through its JSON form, so a
// bug in Model's internal layout cannot hide in both implementations.

#include <cmath>
#include <vector>

#include "mc/mlcore.hpp"

namespace oracle {

inline std::vector<double> raw_forward(const mc::Json& model, const std::vector<double>& x) {
  std::vector<double> h = x;
  const auto& layers = model.at("weights");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].at("weights");
    const auto& b = layers[l].at("bias");
    std::vector<double> next(b.size());
    for (std::size_t r = 0; r < b.size(); ++r) {
      double z = b[r].get<double>();
      for (std::size_t c = 0; c < h.size(); ++c) z += w[r][c].get<double>() * h[c];
      next[r] = (l + 1 < layers.size()) ? std::tanh(z) : z;
    }
    h = std::move(next);
  }
  return h;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace oracle

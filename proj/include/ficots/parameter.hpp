#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ficots/rng.hpp"
#include "ficots/tensor.hpp"

namespace ficots {

// A named trainable tensor plus its Adam moment buffers.
struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<double> adam_m;
  std::vector<double> adam_v;

  Parameter() = default;
  Parameter(std::string param_name, Tensor t)
      : name(std::move(param_name)), tensor(std::move(t)) {
    adam_m.assign(tensor.size(), 0.0);
    adam_v.assign(tensor.size(), 0.0);
  }
};

// Weight init: uniform in +/- sqrt(1/fan_in).
inline Parameter make_weight(std::string name, Shape shape,
                             std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  std::vector<double> v(count);
  for (auto& e : v) e = rng.uniform(-bound, bound);
  return Parameter(std::move(name),
                   Tensor::from_values(std::move(shape), std::move(v), true));
}

inline Parameter make_zero_param(std::string name, Shape shape) {
  return Parameter(std::move(name), Tensor::zeros(std::move(shape), true));
}

}  // namespace ficots

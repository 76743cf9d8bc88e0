#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ficots/parameter.hpp"
#include "ficots/tensor.hpp"

namespace ficots {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double tolerance = 0.0;
  bool pass = false;
  std::size_t checked_elements = 0;
};

// Compares reverse-mode gradients of a scalar loss against central finite
// differences (f(t+h) - f(t-h)) / 2h for every element of every parameter.
// `make_loss` must rebuild the loss from the parameters' current values on
// each call. Relative error uses denominator max(1, |a|, |b|) so that
// near-zero gradients are compared absolutely; finite differences cannot
// certify below their own round-off floor.
GradCheckReport finite_diff_check(const std::function<Tensor()>& make_loss,
                                  const std::vector<Parameter*>& params,
                                  double h = 1e-5, double tol = 1e-4);

}  // namespace ficots

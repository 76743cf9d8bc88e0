#include "ficots/gradcheck.hpp"

#include <cmath>

#include "ficots/errors.hpp"

namespace ficots {

GradCheckReport finite_diff_check(const std::function<Tensor()>& make_loss,
                                  const std::vector<Parameter*>& params,
                                  double h, double tol) {
  if (h <= 0.0) throw NumericError("finite_diff_check: h must be positive");

  for (Parameter* p : params) p->tensor.zero_grad();
  Tensor loss = make_loss();
  const double base = loss.scalar_value();
  if (!std::isfinite(base))
    throw NumericError("finite_diff_check: loss is not finite");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->tensor.grad());

  GradCheckReport report;
  report.tolerance = tol;
  auto eval = [&]() {
    const double v = make_loss().scalar_value();
    if (!std::isfinite(v))
      throw NumericError("finite_diff_check: perturbed loss is not finite");
    return v;
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    auto& vals = p->tensor.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double fp = eval();
      vals[i] = saved - h;
      const double fm = eval();
      vals[i] = saved;

      const double numeric = (fp - fm) / (2.0 * h);
      const double exact = analytic[pi][i];
      const double denom =
          std::max({1.0, std::fabs(numeric), std::fabs(exact)});
      const double rel = std::fabs(numeric - exact) / denom;
      ++report.checked_elements;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = i;
      }
    }
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace ficots

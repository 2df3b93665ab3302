#include "stackvet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stackvet/rng.hpp"

namespace stackvet {
namespace {

double evaluate(const LossBuilder& build_loss) {
  Tape<double> tape;
  tape.set_grad_enabled(false);
  const Var loss = build_loss(tape);
  return tape.value(loss)[0];
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& build_loss, std::span<Parameter<double>* const> params,
                                  const GradCheckOptions& options) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    const Var loss = build_loss(tape);
    tape.backward(loss);
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (auto* p : params) {
    std::vector<std::size_t> coords(p->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(options.max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double original = p->value[i];
      p->value[i] = original + options.step;
      const double up = evaluate(build_loss);
      p->value[i] = original - options.step;
      const double down = evaluate(build_loss);
      p->value[i] = original;

      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.coords_checked;
      if (err > result.max_rel_error || result.worst_parameter.empty()) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst_parameter = p->name;
          result.worst_index = i;
          result.worst_analytic = analytic;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace stackvet

#pragma once

#include <functional>
#include <span>
#include <string>

#include "stackvet/tape.hpp"

namespace stackvet {

struct GradCheckOptions {
  double step = 1e-6;
  /// Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Builds the scalar loss on a fresh tape from the current parameter values.
/// Must be deterministic (reseed any dropout generator inside).
using LossBuilder = std::function<Var(Tape<double>&)>;

/// Compares backward() gradients with central differences at the current
/// parameter values. Per coordinate the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8); the maximum is returned.
/// Parameter gradients are zeroed first and hold the analytic values afterwards.
GradCheckResult finite_diff_check(const LossBuilder& build_loss, std::span<Parameter<double>* const> params,
                                  const GradCheckOptions& options = {});

}  // namespace stackvet

#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "damsl/errors.hpp"
#include "damsl/optim.hpp"

namespace damsl {

// Central-difference gradient verification. `loss_fn` re-runs the forward
// pass against the current parameter values; `analytic` holds the gradients
// under test, aligned with `params`. Returns the max relative error
// |analytic - fd| / max(1, |fd|) over every parameter.
inline double grad_check(const std::function<double()>& loss_fn, ParamRefs& params,
                         const GradBlocks& analytic, double step) {
  if (step <= 0.0) throw config_error("grad_check: step must be > 0");
  if (analytic.size() != params.blocks.size())
    throw shape_error("grad_check: analytic block count " + std::to_string(analytic.size()) +
                      " vs params " + std::to_string(params.blocks.size()));
  double max_err = 0.0;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    auto& block = params.blocks[b];
    if (analytic[b].size() != block.size())
      throw shape_error("grad_check: block '" + params.names[b] + "' sizes " +
                        std::to_string(block.size()) + " vs analytic " +
                        std::to_string(analytic[b].size()));
    for (std::size_t k = 0; k < block.size(); ++k) {
      const double saved = block[k];
      if (!std::isfinite(saved))
        throw numeric_error("grad_check: non-finite parameter at " + params.names[b] + "[" +
                            std::to_string(k) + "]");
      block[k] = saved + step;
      const double up = loss_fn();
      block[k] = saved - step;
      const double down = loss_fn();
      block[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw numeric_error("grad_check: non-finite loss perturbing " + params.names[b] +
                            "[" + std::to_string(k) + "]");
      const double fd = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[b][k] - fd) / std::max(1.0, std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace damsl

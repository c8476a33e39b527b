#pragma once

#include <functional>

#include "ulfe/nn/graph.hpp"

namespace ulfe {
namespace nn {

/// Central-difference check of d(loss)/d(leaves). `build` must construct the
/// scalar loss graph from the current leaf values on every call. Run with
/// S = double; float loses too many digits at usable step sizes. Returns the
/// worst relative error max(|ga - gn|) / max(|ga|, |gn|, 1).
template <typename S>
double gradcheck(const std::vector<Var<S>>& leaves, const std::function<Var<S>()>& build,
                 double step = 1e-5) {
  for (const auto& l : leaves) l->drop_grad();
  auto loss = build();
  backward(loss);

  double worst = 0;
  for (const auto& l : leaves) {
    for (index_t i = 0; i < l->value.numel(); ++i) {
      const S saved = l->value[i];
      const double h = step * std::max(1.0, std::fabs(static_cast<double>(saved)));
      double fp, fm;
      {
        NoGradGuard ng;
        l->value[i] = saved + static_cast<S>(h);
        fp = static_cast<double>(build()->value[0]);
        l->value[i] = saved - static_cast<S>(h);
        fm = static_cast<double>(build()->value[0]);
        l->value[i] = saved;
      }
      const double gn = (fp - fm) / (2 * h);
      const double ga = l->has_grad() ? static_cast<double>(l->grad[i]) : 0.0;
      const double err = std::fabs(ga - gn) / std::max({std::fabs(ga), std::fabs(gn), 1.0});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace nn
}  // namespace ulfe

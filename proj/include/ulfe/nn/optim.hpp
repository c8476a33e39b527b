#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ulfe/nn/graph.hpp"

namespace ulfe {
namespace nn {

/// Adam over a fixed named parameter list. Moment tensors are exposed by
/// parameter name so checkpoints can round-trip the full optimizer state.
template <typename S>
class Adam {
 public:
  struct Slot {
    Tensor<S> m, v;
  };

  Adam(std::vector<std::pair<std::string, Var<S>>> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, p] : params_) {
      Slot s;
      s.m = Tensor<S>(p->value.shape(), S(0));
      s.v = Tensor<S>(p->value.shape(), S(0));
      slots_.emplace(name, std::move(s));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::vector<std::pair<std::string, Var<S>>>& params() const { return params_; }

  void zero_grad() {
    for (auto& [name, p] : params_) p->drop_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params_) {
      if (!p->has_grad()) continue;  // parameter unused by this step's graph
      Slot& s = slots_.at(name);
      const S* g = p->grad.data();
      S* m = s.m.data();
      S* v = s.v.data();
      S* w = p->value.data();
      const index_t n = p->value.numel();
      for (index_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
        const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        w[i] -= static_cast<S>(lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
      }
    }
  }

 private:
  std::vector<std::pair<std::string, Var<S>>> params_;
  std::map<std::string, Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace nn
}  // namespace ulfe

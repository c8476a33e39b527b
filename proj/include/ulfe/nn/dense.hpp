#pragma once

#include "ulfe/nn/init.hpp"
#include "ulfe/nn/module.hpp"
#include "ulfe/nn/ops.hpp"

// Token-space building blocks shared by the attention-based models.

namespace ulfe {
namespace nn {

template <typename S>
class Linear : public Module<S> {
 public:
  Linear(index_t in, index_t out, Rng& rng, bool bias = true) {
    w_ = this->param("w", trunc_normal<S>(Shape{in, out}, rng));
    if (bias) b_ = this->param("b", zeros<S>(Shape{out}));
  }
  Var<S> operator()(const Var<S>& x) const {
    auto y = matmul(x, w_);
    return b_ ? add_rowvec(y, b_) : y;
  }

 private:
  Var<S> w_, b_;
};

template <typename S>
class TokenNorm : public Module<S> {
 public:
  explicit TokenNorm(index_t dim) {
    g_ = this->param("g", ones<S>(Shape{dim}));
    b_ = this->param("b", zeros<S>(Shape{dim}));
  }
  Var<S> operator()(const Var<S>& x) const { return layer_norm(x, g_, b_, S(1e-5)); }

 private:
  Var<S> g_, b_;
};

}  // namespace nn
}  // namespace ulfe

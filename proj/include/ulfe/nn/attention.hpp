#pragma once

#include <memory>

#include "ulfe/nn/ops.hpp"

namespace ulfe {
namespace nn {

/// Fused windowed multi-head self-attention.
///   qkv:  (nW*T, 3E) packed rows [q | k | v], windows contiguous in row blocks of T
///   bias: (heads, T, T) additive logit bias, shared across windows; null skips the bias
///   mask: optional (nW, T, T) additive logit mask (e.g. -100 across shifted-window seams)
/// Returns (nW*T, E). Softmax probabilities are retained for the backward pass.
template <typename S>
Var<S> windowed_mhsa(const Var<S>& qkv, const Var<S>& bias,
                     std::type_identity_t<std::shared_ptr<const Tensor<S>>> mask, index_t n_windows,
                     index_t window_tokens, index_t heads) {
  const index_t T = window_tokens, nW = n_windows;
  if (qkv->value.rank() != 2 || qkv->value.dim(0) != nW * T || qkv->value.dim(1) % 3 != 0)
    throw std::invalid_argument("windowed_mhsa: qkv must be (nW*T, 3E)");
  const index_t E = qkv->value.dim(1) / 3;
  if (E % heads != 0) throw std::invalid_argument("windowed_mhsa: E not divisible by heads");
  const index_t dh = E / heads;
  if (bias && bias->value.shape() != Shape{heads, T, T})
    throw std::invalid_argument("windowed_mhsa: bias must be (heads, T, T)");
  if (mask && mask->shape() != Shape{nW, T, T})
    throw std::invalid_argument("windowed_mhsa: mask must be (nW, T, T)");

  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using StridedMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
  using ConstStridedMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
  const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));

  auto probs = std::make_shared<Tensor<S>>(Shape{nW, heads, T, T});
  Tensor<S> out(Shape{nW * T, E});
  out.fill(S(0));
  const Eigen::OuterStride<> qkv_stride(3 * E), out_stride(E);

  for (index_t w = 0; w < nW; ++w) {
    const S* qkv_base = qkv->value.data() + w * T * 3 * E;
    for (index_t a = 0; a < heads; ++a) {
      ConstStridedMap q(qkv_base + a * dh, T, dh, qkv_stride);
      ConstStridedMap k(qkv_base + E + a * dh, T, dh, qkv_stride);
      ConstStridedMap v(qkv_base + 2 * E + a * dh, T, dh, qkv_stride);
      Mat s = (q * k.transpose()) * scale;
      if (bias) s += Eigen::Map<const Mat>(bias->value.data() + a * T * T, T, T);
      if (mask) s += Eigen::Map<const Mat>(mask->data() + w * T * T, T, T);
      Eigen::Map<Mat> p(probs->data() + (w * heads + a) * T * T, T, T);
      for (index_t i = 0; i < T; ++i) {
        const S mx = s.row(i).maxCoeff();
        p.row(i) = (s.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      StridedMap o(out.data() + w * T * E + a * dh, T, dh, out_stride);
      o.noalias() = p * v;
    }
  }

  std::vector<Var<S>> parents{qkv};
  if (bias) parents.push_back(bias);
  return make_node<S>("windowed_mhsa", std::move(out), std::move(parents),
                      [nW, T, E, heads, dh, scale, probs](Node<S>& n) {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using StridedMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
    using ConstStridedMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
    auto& qkv_node = *n.parents[0];
    Node<S>* bias_node = n.parents.size() > 1 ? n.parents[1].get() : nullptr;
    const bool bias_grad = bias_node && bias_node->requires_grad;
    if (!qkv_node.requires_grad && !bias_grad) return;
    if (qkv_node.requires_grad) qkv_node.ensure_grad();
    if (bias_grad) bias_node->ensure_grad();
    const Eigen::OuterStride<> qkv_stride(3 * E), out_stride(E);
    for (index_t w = 0; w < nW; ++w) {
      const S* qkv_base = qkv_node.value.data() + w * T * 3 * E;
      S* gqkv_base = qkv_node.requires_grad ? qkv_node.grad.data() + w * T * 3 * E : nullptr;
      for (index_t a = 0; a < heads; ++a) {
        ConstStridedMap q(qkv_base + a * dh, T, dh, qkv_stride);
        ConstStridedMap k(qkv_base + E + a * dh, T, dh, qkv_stride);
        ConstStridedMap v(qkv_base + 2 * E + a * dh, T, dh, qkv_stride);
        Eigen::Map<const Mat> p(probs->data() + (w * heads + a) * T * T, T, T);
        ConstStridedMap go(n.grad.data() + w * T * E + a * dh, T, dh, out_stride);
        Mat dp = go * v.transpose();
        Mat ds(T, T);
        for (index_t i = 0; i < T; ++i) {
          const S dot = (dp.row(i).array() * p.row(i).array()).sum();
          ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
        }
        if (bias_grad)
          Eigen::Map<Mat>(bias_node->grad.data() + a * T * T, T, T) += ds;
        if (qkv_node.requires_grad) {
          StridedMap gq(gqkv_base + a * dh, T, dh, qkv_stride);
          StridedMap gk(gqkv_base + E + a * dh, T, dh, qkv_stride);
          StridedMap gv(gqkv_base + 2 * E + a * dh, T, dh, qkv_stride);
          gq.noalias() += ds * k * scale;
          gk.noalias() += ds.transpose() * q * scale;
          gv.noalias() += p.transpose() * go;
        }
      }
    }
  });
}

}  // namespace nn
}  // namespace ulfe

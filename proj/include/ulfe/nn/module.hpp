#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ulfe/nn/graph.hpp"

namespace ulfe {
namespace nn {

/// Base for parameterized blocks. Parameters and children are registered by
/// name during construction; traversal yields stable slash-joined names used
/// by optimizers and checkpoints.
template <typename S>
class Module {
 public:
  virtual ~Module() = default;
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<std::pair<std::string, Var<S>>> named_parameters() const {
    std::vector<std::pair<std::string, Var<S>>> out;
    collect("", out);
    return out;
  }

  index_t parameter_count() const {
    index_t n = 0;
    for (const auto& [name, p] : named_parameters()) n += p->value.numel();
    return n;
  }

  void set_requires_grad(bool b) {
    for (auto& [name, p] : named_parameters()) p->requires_grad = b;
  }

  void zero_grad() {
    for (auto& [name, p] : named_parameters()) p->drop_grad();
  }

 protected:
  Var<S> param(const std::string& name, Tensor<S> init) {
    auto v = leaf(std::move(init), true);
    params_.emplace_back(name, v);
    return v;
  }

  void child(const std::string& name, Module<S>& m) { children_.emplace_back(name, &m); }

 private:
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Var<S>>>& out) const {
    for (const auto& [name, p] : params_) out.emplace_back(prefix + name, p);
    for (const auto& [name, m] : children_) m->collect(prefix + name + "/", out);
  }

  std::vector<std::pair<std::string, Var<S>>> params_;
  std::vector<std::pair<std::string, Module<S>*>> children_;
};

}  // namespace nn
}  // namespace ulfe

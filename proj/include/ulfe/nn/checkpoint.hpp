#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ulfe/core/archive.hpp"
#include "ulfe/core/sha256.hpp"
#include "ulfe/nn/module.hpp"
#include "ulfe/nn/optim.hpp"

namespace ulfe::nn {

// Writes every named parameter (and, when given, the optimizer's moment tensors and
// step counter) plus caller metadata into one archive file.
template <typename S>
void save_checkpoint(const std::string& path, const Module<S>& model, Adam<S>* opt,
                     nlohmann::json meta = {}) {
  ArchiveWriter w;
  for (const auto& [name, p] : model.named_parameters()) w.add(name, p->value);
  if (opt) {
    for (auto& [name, slot] : opt->slots()) {
      w.add("adam_m/" + name, slot.m);
      w.add("adam_v/" + name, slot.v);
    }
    meta["adam_t"] = opt->t();
  }
  w.meta() = std::move(meta);
  w.save(path);
}

// Restores parameters (by exact name) and optionally the optimizer state; returns the
// stored metadata. Every model parameter must be present in the archive.
template <typename S>
nlohmann::json load_checkpoint(const std::string& path, Module<S>& model, Adam<S>* opt = nullptr) {
  Archive a = Archive::load(path);
  for (auto& [name, p] : model.named_parameters()) {
    Tensor<S> t = a.get<S>(name);
    if (t.shape() != p->value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for parameter " + name);
    p->value = std::move(t);
    p->drop_grad();
  }
  if (opt) {
    for (auto& [name, slot] : opt->slots()) {
      slot.m = a.get<S>("adam_m/" + name);
      slot.v = a.get<S>("adam_v/" + name);
    }
    opt->set_t(a.meta().at("adam_t").get<std::int64_t>());
  }
  return a.meta();
}

// Multi-network variant for adversarial training: each model's parameters are stored
// under "<model name>/", each optimizer's moments under "adam_m/<opt name>/" (and _v),
// with per-optimizer step counters in the metadata.
template <typename S>
void save_bundle(const std::string& path,
                 const std::vector<std::pair<std::string, const Module<S>*>>& models,
                 const std::vector<std::pair<std::string, Adam<S>*>>& opts,
                 nlohmann::json meta = {}) {
  ArchiveWriter w;
  for (const auto& [tag, m] : models)
    for (const auto& [name, p] : m->named_parameters()) w.add(tag + "/" + name, p->value);
  for (const auto& [tag, opt] : opts) {
    for (auto& [name, slot] : opt->slots()) {
      w.add("adam_m/" + tag + "/" + name, slot.m);
      w.add("adam_v/" + tag + "/" + name, slot.v);
    }
    meta["adam_t"][tag] = opt->t();
  }
  w.meta() = std::move(meta);
  w.save(path);
}

template <typename S>
nlohmann::json load_bundle(const std::string& path,
                           const std::vector<std::pair<std::string, Module<S>*>>& models,
                           const std::vector<std::pair<std::string, Adam<S>*>>& opts = {}) {
  Archive a = Archive::load(path);
  for (const auto& [tag, m] : models) {
    for (auto& [name, p] : m->named_parameters()) {
      Tensor<S> t = a.get<S>(tag + "/" + name);
      if (t.shape() != p->value.shape())
        throw std::runtime_error("checkpoint: shape mismatch for parameter " + tag + "/" + name);
      p->value = std::move(t);
      p->drop_grad();
    }
  }
  for (const auto& [tag, opt] : opts) {
    for (auto& [name, slot] : opt->slots()) {
      slot.m = a.get<S>("adam_m/" + tag + "/" + name);
      slot.v = a.get<S>("adam_v/" + tag + "/" + name);
    }
    opt->set_t(a.meta().at("adam_t").at(tag).template get<std::int64_t>());
  }
  return a.meta();
}

// Order- and layout-stable digest of the weight values alone; any training step or
// load that changes a parameter changes the hash.
template <typename S>
std::string weights_hash(const Module<S>& model) {
  ArchiveWriter w;
  for (const auto& [name, p] : model.named_parameters()) w.add(name, p->value);
  return sha256_hex(w.bytes());
}

}  // namespace ulfe::nn

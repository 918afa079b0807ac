#pragma once

#include <Eigen/Core>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ig/core/rng.hpp"
#include "ig/core/shape.hpp"

namespace ig {

template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

// A named trainable array plus its gradient and Adam moments. Values are flat
// row-major; `shape` is bookkeeping for serialization and shape checks.
template <typename S>
struct Param {
  std::string name;
  Shape shape;
  ArrX<S> value;
  ArrX<S> grad;
  ArrX<S> m;
  ArrX<S> v;
};

// Insertion-ordered collection with stable addresses (graphs bind raw
// Param pointers while a forward/backward pass is alive).
template <typename S>
class ParamSet {
 public:
  Param<S>& add(const std::string& name, Shape shape) {
    require(index_.find(name) == index_.end(), "ParamSet: duplicate name '" + name + "'");
    long n = numel(shape);
    auto p = std::make_unique<Param<S>>();
    p->name = name;
    p->shape = std::move(shape);
    p->value = ArrX<S>::Zero(n);
    p->grad = ArrX<S>::Zero(n);
    p->m = ArrX<S>::Zero(n);
    p->v = ArrX<S>::Zero(n);
    index_[name] = entries_.size();
    entries_.push_back(std::move(p));
    return *entries_.back();
  }

  Param<S>& at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamSet: unknown name '" + name + "'");
    return *entries_[it->second];
  }
  const Param<S>& at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamSet: unknown name '" + name + "'");
    return *entries_[it->second];
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  size_t size() const { return entries_.size(); }
  Param<S>& operator[](size_t i) { return *entries_[i]; }
  const Param<S>& operator[](size_t i) const { return *entries_[i]; }

  long total_values() const {
    long n = 0;
    for (const auto& p : entries_) n += p->value.size();
    return n;
  }

  void zero_grads() {
    for (auto& p : entries_) p->grad.setZero();
  }

  // Deep copy; moments and grads come along so target-network syncs are exact.
  ParamSet clone() const {
    ParamSet out;
    for (const auto& p : entries_) {
      Param<S>& q = out.add(p->name, p->shape);
      q.value = p->value;
      q.grad = p->grad;
      q.m = p->m;
      q.v = p->v;
    }
    return out;
  }

  // Copies values only (shapes must already match). Used for target syncs.
  void copy_values_from(const ParamSet& other) {
    require(size() == other.size(), "copy_values_from: entry count mismatch");
    for (size_t i = 0; i < entries_.size(); ++i) {
      require(entries_[i]->name == other.entries_[i]->name &&
                  entries_[i]->value.size() == other.entries_[i]->value.size(),
              "copy_values_from: layout mismatch at '" + entries_[i]->name + "'");
      entries_[i]->value = other.entries_[i]->value;
    }
  }

 private:
  std::vector<std::unique_ptr<Param<S>>> entries_;
  std::map<std::string, size_t> index_;
};

// Fills a parameter uniformly in ±sqrt(1/fan_in).
template <typename S>
void init_uniform_fan_in(Param<S>& p, long fan_in, Rng& rng) {
  double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (long i = 0; i < p.value.size(); ++i)
    p.value[i] = static_cast<S>((2.0 * rng.uniform() - 1.0) * bound);
}

template <typename S>
struct AdamConfig {
  S alpha = static_cast<S>(1e-4);
  S beta1 = static_cast<S>(0.9);
  S beta2 = static_cast<S>(0.999);
  S eps = static_cast<S>(1e-8);
};

template <typename S>
struct AdamState {
  AdamConfig<S> cfg;
  long t = 0;
};

// One bias-corrected Adam update over every entry in the set; clears grads.
template <typename S>
void adam_step(ParamSet<S>& params, AdamState<S>& st) {
  st.t += 1;
  const S b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const S c1 = S(1) - static_cast<S>(std::pow(static_cast<double>(b1), static_cast<double>(st.t)));
  const S c2 = S(1) - static_cast<S>(std::pow(static_cast<double>(b2), static_cast<double>(st.t)));
  for (size_t i = 0; i < params.size(); ++i) {
    Param<S>& p = params[i];
    require(p.grad.size() == p.value.size(), "adam_step: grad size drift at '" + p.name + "'");
    p.m = b1 * p.m + (S(1) - b1) * p.grad;
    p.v = b2 * p.v + (S(1) - b2) * p.grad.square();
    p.value -= st.cfg.alpha * (p.m / c1) / ((p.v / c2).sqrt() + st.cfg.eps);
    p.grad.setZero();
  }
}

}  // namespace ig

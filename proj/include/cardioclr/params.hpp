#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cardioclr/errors.hpp"
#include "cardioclr/rng.hpp"
#include "cardioclr/tape.hpp"
#include "cardioclr/tensor.hpp"

namespace cardioclr {

// Ordered, named collection of trainable tensors.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  void add(std::string name, Tensor<T> value) {
    entries_.push_back(Entry{std::move(name), std::move(value)});
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Tensor<T>& operator[](std::size_t i) { return entries_.at(i).value; }
  const Tensor<T>& operator[](std::size_t i) const { return entries_.at(i).value; }
  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  const Tensor<T>& get(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return e.value;
    }
    throw ConfigError("no parameter named '" + name + "'");
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  // Places every tensor on the tape as a leaf.
  std::vector<Var> bind(Tape<T>& tape, bool requires_grad) const {
    std::vector<Var> vars;
    vars.reserve(entries_.size());
    for (const auto& e : entries_) vars.push_back(tape.leaf(e.value, requires_grad));
    return vars;
  }

  // Zero tensors shaped like each parameter.
  std::vector<Tensor<T>> zeros_like() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.value.shape(), T{0});
    return out;
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 0;
    for (const auto& e : entries_) h = mix64(h ^ cardioclr::checksum(e.value));
    return h;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

// Gradient of each bound var, zero where the var did not take part in the loss.
template <typename T>
void accumulate_grads(const Tape<T>& tape, const std::vector<Var>& vars,
                      std::vector<Tensor<T>>& grads) {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (!tape.has_grad(vars[i])) continue;
    const auto& g = tape.grad(vars[i]);
    for (std::size_t j = 0; j < g.numel(); ++j) grads[i][j] += g[j];
  }
}

// Kaiming-uniform with ReLU gain: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace cardioclr

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dancerl/core/tensor.hpp"

namespace dancerl {

using Rng = std::mt19937_64;
using ParamId = std::size_t;

// SplitMix64 finalizer; derives independent child seeds from a parent seed.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t parent, const std::string& label);

// Ordered, named parameter tensors of one network.
class Parameters {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t count() const { return values_.size(); }
  Tensor& operator[](ParamId id) { return values_[id]; }
  const Tensor& operator[](ParamId id) const { return values_[id]; }
  const std::string& name(ParamId id) const { return names_[id]; }
  std::optional<ParamId> find(const std::string& name) const;
  std::size_t scalar_count() const;

  // FNV-1a over names, shapes and raw bytes; used to prove a frozen copy never moved.
  std::uint64_t fingerprint() const;

  friend bool operator==(const Parameters&, const Parameters&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// One gradient buffer per parameter, same shapes.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const Parameters& params);

  std::size_t count() const { return grads_.size(); }
  Tensor& operator[](ParamId id) { return grads_[id]; }
  const Tensor& operator[](ParamId id) const { return grads_[id]; }

  void zero();
  void accumulate(const Gradients& other, double scale = 1.0);
  void scale(double s);
  double squared_norm() const;
  bool all_finite() const;

 private:
  std::vector<Tensor> grads_;
};

// Scales all buffers so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_grad_norm(std::vector<Gradients*> grads, double max_norm);

void init_normal(Tensor& t, Rng& rng, double stddev);

}  // namespace dancerl

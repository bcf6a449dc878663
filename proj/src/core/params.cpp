#include "dancerl/core/params.hpp"

#include <cmath>
#include <cstring>

#include "dancerl/core/errors.hpp"

namespace dancerl {

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, const std::string& label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(parent, h);
}

ParamId Parameters::add(std::string name, Tensor value) {
  if (find(name)) throw ContractError("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<ParamId> Parameters::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::uint64_t Parameters::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < values_.size(); ++i) {
    mix(names_[i].data(), names_[i].size());
    for (auto d : values_[i].shape()) mix(&d, sizeof d);
    mix(values_[i].data(), values_[i].size() * sizeof(double));
  }
  return h;
}

Gradients::Gradients(const Parameters& params) {
  grads_.reserve(params.count());
  for (ParamId i = 0; i < params.count(); ++i) grads_.emplace_back(params[i].shape(), 0.0);
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void Gradients::accumulate(const Gradients& other, double scale) {
  if (other.grads_.size() != grads_.size()) throw ContractError("gradient set mismatch");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto& dst = grads_[i].storage();
    const auto& src = other.grads_[i].storage();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads_)
    for (auto& v : g.storage()) v *= s;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& g : grads_)
    for (double v : g.storage()) s += v * v;
  return s;
}

bool Gradients::all_finite() const {
  for (const auto& g : grads_)
    if (!g.all_finite()) return false;
  return true;
}

double clip_grad_norm(std::vector<Gradients*> grads, double max_norm) {
  double sq = 0.0;
  for (auto* g : grads) sq += g->squared_norm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto* g : grads) g->scale(s);
  }
  return norm;
}

void init_normal(Tensor& t, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.storage()) v = dist(rng);
}

}  // namespace dancerl

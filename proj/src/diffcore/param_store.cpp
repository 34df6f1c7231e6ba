#include "vrc/diffcore/param_store.hpp"

#include <cmath>
#include <random>

#include "vrc/diffcore/ops.hpp"
#include "vrc/errors.hpp"

namespace vrc::diff {

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = fnv1a(tag, 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull));
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xBF58476D1CE4E5B9ull;
  h ^= h >> 27;
  h *= 0x94D049BB133111EBull;
  return h ^ (h >> 31);
}

Parameter& ParamStore::create(const std::string& name, Shape shape, Init init) {
  VRC_REQUIRE(!contains(name), "parameter '" + name + "' already exists");
  Parameter p;
  p.value = Tensor(shape);
  p.grad = Tensor(shape);
  if (init == Init::glorot_uniform) {
    const std::size_t fan_in = shape.size() >= 2 ? shape[0] : 1;
    const std::size_t fan_out = shape.empty() ? 1 : shape.back();
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::mt19937_64 rng(mix_seed(seed_, name));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : p.value.data()) v = dist(rng);
  }
  return entries_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::assign(const std::string& name, Tensor value) {
  Parameter& p = entries_[name];
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  return p;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  VRC_REQUIRE(it != entries_.end(), "unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  VRC_REQUIRE(it != entries_.end(), "unknown parameter '" + name + "'");
  return it->second;
}

Var ParamStore::bind(Tape& tape, const std::string& name) {
  auto it = entries_.find(name);
  VRC_REQUIRE(it != entries_.end(), "unknown parameter '" + name + "'");
  return tape.param(it->second, &it->first);
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : entries_) p.zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += p.value.size();
  return n;
}

Var Linear::operator()(Tape& tape, ParamStore& store, Var x) const {
  return diff::linear(x, store.bind(tape, weight), store.bind(tape, bias));
}

Linear make_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out) {
  Linear l{prefix + ".w", prefix + ".b", in, out};
  store.create(l.weight, Shape{in, out}, Init::glorot_uniform);
  store.create(l.bias, Shape{out}, Init::zeros);
  return l;
}

}  // namespace vrc::diff

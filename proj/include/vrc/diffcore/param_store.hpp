#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vrc/diffcore/tape.hpp"

namespace vrc::diff {

enum class Init { glorot_uniform, zeros };

// Named learnable arrays. Names are hierarchical ("renet.l0.psk.a.gamma1.w");
// the first path component names the owning network block. Iteration order
// is lexicographic, which keeps checkpoints and optimizer sweeps stable.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  // Glorot: uniform in +-sqrt(6 / (fan_in + fan_out)), drawn from a generator
  // seeded by (store seed, name) so values do not depend on creation order.
  Parameter& create(const std::string& name, Shape shape, Init init = Init::glorot_uniform);
  // Insert or overwrite with an explicit value (checkpoint loading).
  Parameter& assign(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  Var bind(Tape& tape, const std::string& name);

  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }

  const std::map<std::string, Parameter>& entries() const noexcept { return entries_; }
  std::map<std::string, Parameter>& entries() noexcept { return entries_; }

 private:
  std::uint64_t seed_;
  std::map<std::string, Parameter> entries_;
};

// 64-bit FNV-1a; stable across platforms, used to derive per-name seeds.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 14695981039346656037ull);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

// Shared-MLP layer: weight [in x out], bias [out], resolved by name on use.
struct Linear {
  std::string weight;
  std::string bias;
  std::size_t in = 0;
  std::size_t out = 0;

  Var operator()(Tape& tape, ParamStore& store, Var x) const;
};

Linear make_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out);

}  // namespace vrc::diff

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vrc/diffcore/param_store.hpp"
#include "vrc/diffcore/tape.hpp"

namespace vrc::diff {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "input 0[3]" or "param name[7]"
  double analytic = 0.0;
  double numeric = 0.0;
};

// Scalar-valued graph over leaf inputs.
using LeafGraph = std::function<Var(Tape&, std::span<const Var>)>;
// Scalar-valued graph reading parameters from a store.
using ParamGraph = std::function<Var(Tape&)>;

struct ParamProbe {
  std::string name;
  std::size_t index = 0;
};

// Coordinates whose error exceeds this at eps are re-estimated with narrower
// stencils (see grad_check.cpp).
inline constexpr double kRefineThreshold = 1e-6;

// Central differences on every input coordinate against the tape gradient.
// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
// eps must lie in [1e-7, 1e-3]; a non-finite intermediate throws
// NumericError naming the node.
GradCheckReport grad_check(const LeafGraph& f, std::vector<Tensor> inputs, double eps = 1e-5);

GradCheckReport grad_check_params(const ParamGraph& f, ParamStore& store,
                                  std::span<const ParamProbe> probes, double eps = 1e-5);

// Every coordinate of every parameter whose name starts with prefix.
std::vector<ParamProbe> all_probes(const ParamStore& store, const std::string& prefix = "");
// count coordinates drawn uniformly (seeded) from parameters matching prefix.
std::vector<ParamProbe> sample_probes(const ParamStore& store, std::size_t count,
                                      std::uint64_t seed, const std::string& prefix = "");

}  // namespace vrc::diff

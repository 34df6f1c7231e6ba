#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "vrc/diffcore/tape.hpp"

namespace vrc::diff {

enum class Activation { relu, none };
enum class Reduce { mean, max };

// Throws ConfigError for anything but "relu" / "none".
Activation parse_activation(std::string_view name);

// out[i] = x[i] . weight + bias. x is N x Cin (or a Cin vector), weight
// Cin x Cout, bias Cout.
Var linear(Var x, Var weight, Var bias);
Var matmul(Var x, Var weight);
Var activate(Var x, Activation kind);
inline Var relu(Var x) { return activate(x, Activation::relu); }

// Channelwise two-way softmax: a_c = e^{x_c} / (e^{x_c} + e^{y_c}),
// evaluated with the larger logit subtracted first.
std::pair<Var, Var> softmax_pair(Var logits_a, Var logits_b);

// Reduction over rows (points). max routes the gradient to the first
// occurrence of the maximum.
Var reduce(Var x, Reduce kind);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var exp(Var x);
Var square(Var x);
Var sum(Var x);  // rank-0 result
Var clamp(Var x, double lo, double hi);
Var detach(Var x);

// Row-broadcast: x is N x C, r a C vector.
Var add_row(Var x, Var r);
Var mul_row(Var x, Var r);

Var reshape(Var x, Shape shape);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var gather_rows(Var x, std::span<const std::uint32_t> index);
// Row r of a matrix as a vector.
Var row(Var x, std::size_t r);
// out row i*parts.size() + b = parts[b] row i.
Var interleave_rows(std::span<const Var> parts);

}  // namespace vrc::diff

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "vrc/diffcore/checkpoint.hpp"
#include "vrc/diffcore/grad_check.hpp"
#include "vrc/diffcore/ops.hpp"
#include "vrc/diffcore/param_store.hpp"
#include "vrc/errors.hpp"

using namespace vrc;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using test::random_tensor;

TEST(Tensor, ShapeInvariant) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ContractError);
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(Tensor::vector({1, 2}).rows(), 1u);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4).item(), 4.0);
}

TEST(Linear, ZeroInputGivesBiasRows) {
  Tape t;
  std::mt19937_64 rng(1);
  Var x = t.constant(Tensor(Shape{4, 3}));
  Var w = t.constant(random_tensor({3, 2}, rng));
  Var b = t.constant(Tensor::vector({0.25, -2.0}));
  const Tensor& y = diff::linear(x, w, b).value();
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y(i, 0), 0.25);
    EXPECT_EQ(y(i, 1), -2.0);
  }
}

TEST(Linear, IdentityWeightReproducesInput) {
  Tape t;
  std::mt19937_64 rng(2);
  const Tensor xin = random_tensor({5, 3}, rng);
  Tensor eye(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  EXPECT_EQ(diff::linear(t.constant(xin), t.constant(eye), t.constant(Tensor(Shape{3}))).value(), xin);
}

TEST(Linear, ShapeMismatchIsContractError) {
  Tape t;
  EXPECT_THROW(diff::linear(t.constant(Tensor(Shape{2, 3})), t.constant(Tensor(Shape{4, 2})),
                            t.constant(Tensor(Shape{2}))),
               ContractError);
}

TEST(Linear, GradientOfSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto r = diff::grad_check(
      [](Tape&, std::span<const Var> v) { return diff::sum(diff::linear(v[0], v[1], v[2])); },
      {random_tensor({4, 3}, rng), random_tensor({3, 2}, rng), random_tensor({2}, rng)});
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 12u + 6u + 2u);
}

TEST(Linear, HomogeneousWithoutBias) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({6, 4}, rng), w = random_tensor({4, 3}, rng);
  Tensor x3 = x;
  for (double& v : x3.data()) v *= 3.0;
  Tape t;
  const Tensor zero(Shape{3});
  const Tensor y = diff::linear(t.constant(x), t.constant(w), t.constant(zero)).value();
  const Tensor y3 = diff::linear(t.constant(x3), t.constant(w), t.constant(zero)).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y3[i], 3.0 * y[i], 1e-14);
}

TEST(Activate, ReluAndNone) {
  Tape t;
  Var x = t.leaf(Tensor::vector({-1.0, 0.0, 2.0}));
  Var r = diff::relu(x);
  EXPECT_EQ(r.value(), Tensor::vector({0.0, 0.0, 2.0}));
  EXPECT_EQ(diff::activate(x, diff::Activation::none).value(), x.value());
  t.backward(diff::sum(diff::scale(r, 5.0)));
  EXPECT_EQ(t.grad(x), Tensor::vector({0.0, 0.0, 5.0}));
  EXPECT_THROW(diff::parse_activation("gelu"), ConfigError);
  EXPECT_EQ(diff::parse_activation("relu"), diff::Activation::relu);
}

TEST(SoftmaxPair, Examples) {
  Tape t;
  auto [a, b] = diff::softmax_pair(t.constant(Tensor::vector({0.3, -2.0})),
                                   t.constant(Tensor::vector({0.3, -2.0})));
  EXPECT_EQ(a.value(), Tensor::vector({0.5, 0.5}));
  EXPECT_EQ(b.value(), Tensor::vector({0.5, 0.5}));

  auto [a1, b1] = diff::softmax_pair(t.constant(Tensor::vector({1.0})), t.constant(Tensor::vector({0.0})));
  EXPECT_NEAR(a1.value()[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);

  double prev = 0.0;
  for (double logit : {0.0, 1.0, 5.0, 20.0, 100.0, 700.0}) {
    auto [at, bt] = diff::softmax_pair(t.constant(Tensor::vector({logit})), t.constant(Tensor::vector({0.0})));
    EXPECT_GE(at.value()[0], prev);
    prev = at.value()[0];
    EXPECT_TRUE(std::isfinite(bt.value()[0]));
  }
  EXPECT_NEAR(prev, 1.0, 1e-15);
}

TEST(SoftmaxPair, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    const Tensor la = random_tensor({16}, rng, -30, 30), lb = random_tensor({16}, rng, -30, 30);
    auto [a, b] = diff::softmax_pair(t.constant(la), t.constant(lb));
    Tensor sa = la, sb = lb;
    const double shift = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (std::size_t c = 0; c < 16; ++c) {
      EXPECT_NEAR(a.value()[c] + b.value()[c], 1.0, 1e-15);
      sa[c] += shift;
      sb[c] += shift;
    }
    auto [a2, b2] = diff::softmax_pair(t.constant(sa), t.constant(sb));
    for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(a2.value()[c], a.value()[c], 1e-12);
  }
}

TEST(Reduce, MeanAndMax) {
  Tape t;
  Tensor rows(Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i) {
    rows(i, 0) = 1.5;
    rows(i, 1) = -2.0;
    rows(i, 2) = 0.25;
  }
  EXPECT_EQ(diff::reduce(t.constant(rows), diff::Reduce::mean).value(), Tensor::vector({1.5, -2.0, 0.25}));
  const Tensor one = Tensor::matrix(1, 3, {4, 5, 6});
  EXPECT_EQ(diff::reduce(t.constant(one), diff::Reduce::max).value(), Tensor::vector({4, 5, 6}));
  EXPECT_THROW(diff::reduce(t.constant(Tensor(Shape{0, 3})), diff::Reduce::mean), ContractError);
}

TEST(Reduce, MeanGradientIsUpstreamOverN) {
  Tape t;
  std::mt19937_64 rng(6);
  Var x = t.leaf(random_tensor({5, 2}, rng));
  t.backward(diff::sum(diff::scale(diff::reduce(x, diff::Reduce::mean), 3.0)));
  const Tensor gx = t.grad(x);
  for (double g : gx.data()) EXPECT_DOUBLE_EQ(g, 3.0 / 5.0);
  const auto r = diff::grad_check(
      [](Tape&, std::span<const Var> v) {
        return diff::sum(diff::square(diff::reduce(v[0], diff::Reduce::mean)));
      },
      {random_tensor({7, 3}, rng)});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Reduce, MaxRoutesToFirstOccurrence) {
  Tape t;
  Var x = t.leaf(Tensor::matrix(3, 1, {2.0, 2.0, 1.0}));
  t.backward(diff::sum(diff::reduce(x, diff::Reduce::max)));
  EXPECT_EQ(t.grad(x), Tensor::matrix(3, 1, {1.0, 0.0, 0.0}));
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  const auto r = diff::grad_check(
      [](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(3.0)); },
      {Tensor(Shape{3}, 1.0)});
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, RejectsBadEpsAndNonFiniteNodes) {
  auto f = [](Tape&, std::span<const Var> v) { return diff::sum(v[0]); };
  EXPECT_THROW(diff::grad_check(f, {Tensor(Shape{2})}, 1e-2), ContractError);
  EXPECT_THROW(diff::grad_check(f, {Tensor(Shape{2})}, 1e-9), ContractError);
  auto blowup = [](Tape&, std::span<const Var> v) { return diff::sum(diff::exp(v[0])); };
  try {
    diff::grad_check(blowup, {Tensor(Shape{2}, 1000.0)});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos) << e.what();
  }
}

// Randomized sweep over the primitive set, shapes up to 64 x 32.
TEST(GradCheck, PrimitivesOnRandomShapes) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> rows(1, 64), cols(1, 32);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t n = rows(rng), c = cols(rng), c2 = cols(rng);
    const Tensor w = random_tensor({n, c2}, rng);
    const auto r = diff::grad_check(
        [&](Tape& t, std::span<const Var> v) {
          Var h = diff::linear(v[0], v[1], v[2]);
          Var e = diff::exp(diff::clamp(diff::scale(h, 0.3), -0.5, 0.5));
          Var m = diff::mul(diff::add(h, e), diff::sub(h, diff::add_scalar(e, 0.1)));
          Var rr = diff::add_row(diff::mul_row(m, v[3]), v[3]);
          Var mx = diff::reduce(rr, diff::Reduce::max);
          Var mn = diff::reduce(rr, diff::Reduce::mean);
          Var tail = diff::sum(diff::mul(mx, mn));
          return diff::add(diff::sum(diff::mul(rr, t.constant(w))), tail);
        },
        {random_tensor({n, c}, rng), random_tensor({c, c2}, rng), random_tensor({c2}, rng),
         random_tensor({c2}, rng)});
    EXPECT_LT(r.max_rel_error, 1e-4) << n << "x" << c << "x" << c2 << " worst " << r.worst;
  }
}

TEST(GradCheck, ShapeOps) {
  std::mt19937_64 rng(8);
  const auto r = diff::grad_check(
      [](Tape&, std::span<const Var> v) {
        const std::uint32_t idx[] = {3, 0, 0, 2};
        Var g = diff::gather_rows(v[0], idx);
        Var s = diff::slice_rows(v[0], 1, 2);
        const Var parts[] = {s, diff::square(s)};
        Var il = diff::interleave_rows(parts);
        const Var stack[] = {g, il};
        Var cat = diff::concat_rows(stack);
        Var cc = diff::concat_cols(cat, cat);
        Var rs = diff::reshape(cc, Shape{cc.size()});
        return diff::add(diff::sum(diff::square(rs)), diff::sum(diff::row(v[0], 2)));
      },
      {random_tensor({4, 3}, rng)});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Tape, BackwardTwiceDoublesParameterGradients) {
  diff::ParamStore store(9);
  diff::Linear lin = diff::make_linear(store, "l", 3, 2);
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({4, 3}, rng);
  store.zero_grad();
  Tape t;
  Var out = diff::sum(diff::square(lin(t, store, t.constant(x))));
  t.backward(out);
  const Tensor once = store.at("l.w").grad;
  t.backward(out);
  const Tensor twice = store.at("l.w").grad;
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(twice[i], 2.0 * once[i]);
}

TEST(Tape, DetachBlocksGradient) {
  Tape t;
  Var x = t.leaf(Tensor::vector({1.0, 2.0}));
  t.backward(diff::sum(diff::mul(diff::detach(x), x)));
  EXPECT_EQ(t.grad(x), Tensor::vector({1.0, 2.0}));
}

TEST(ParamStore, GlorotRangeAndNameSeeding) {
  diff::ParamStore a(42), b(42);
  a.create("x.w", {10, 6});
  a.create("y.w", {3, 3});
  b.create("y.w", {3, 3});
  b.create("x.w", {10, 6});
  EXPECT_EQ(a.at("x.w").value, b.at("x.w").value);  // independent of creation order
  const double bound = std::sqrt(6.0 / 16.0);
  for (double v : a.at("x.w").value.data()) EXPECT_LE(std::abs(v), bound);
  EXPECT_THROW(a.create("x.w", {1}), ContractError);
  EXPECT_EQ(a.scalar_count(), 69u);
  diff::ParamStore c(43);
  c.create("x.w", {10, 6});
  EXPECT_NE(a.at("x.w").value, c.at("x.w").value);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vrc_ckpt_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  diff::ParamStore s(5);
  s.create("net.a.w", {3, 4});
  s.create("net.a.b", {4}, diff::Init::zeros);
  s.at("net.a.b").value[1] = std::numeric_limits<double>::denorm_min();
  diff::save_checkpoint(s, dir / "m.json", {{"step", 7}});
  diff::ParamStore r;
  const auto meta = diff::load_checkpoint(r, dir / "m.json");
  EXPECT_EQ(meta.at("step"), 7);
  EXPECT_EQ(r.seed(), 5u);
  EXPECT_EQ(r.at("net.a.w").value, s.at("net.a.w").value);
  EXPECT_EQ(r.at("net.a.b").value, s.at("net.a.b").value);
  diff::save_checkpoint(r, dir / "m2.json", {{"step", 7}});
  EXPECT_EQ(diff::read_file(dir / "m.bin"), diff::read_file(dir / "m2.bin"));

  // Truncated blob is reported, not silently accepted.
  std::string bin = diff::read_file(dir / "m.bin");
  bin.resize(bin.size() - 8);
  diff::write_file_atomic(dir / "m.bin", bin);
  diff::ParamStore bad;
  EXPECT_THROW(diff::load_checkpoint(bad, dir / "m.json"), DataError);
  fs::remove_all(dir);
}

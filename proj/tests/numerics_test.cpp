#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "me2et/numerics/adam.hpp"
#include "me2et/numerics/grad_check.hpp"
#include "me2et/numerics/ops.hpp"
#include "me2et/rng.hpp"

using namespace me2et;
using num::Tensor;
using Td = Tensor<double>;

namespace {

Td random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(r * c);
  for (auto& x : v) x = dist(rng);
  return Td::from({r, c}, v);
}

// Maclaurin series for erf, summed in long double.
long double erf_series(long double x) {
  long double sum = 0, term = x;
  for (int n = 0; n < 200; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (n + 1);
  }
  return 2 * sum / std::sqrt(std::numbers::pi_v<long double>);
}

}  // namespace

TEST(Matmul, IdentityAndSelection) {
  auto eye = Td::from({2, 2}, {1, 0, 0, 1});
  auto m = Td::from({2, 2}, {1, 2, 3, 4});
  auto out = num::matmul(eye, m);
  EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()), (std::vector<double>{1, 2, 3, 4}));
  auto sel = num::matmul(Td::from({1, 2}, {1, 0}), Td::from({2, 1}, {7.5, -2}));
  EXPECT_EQ(sel.item(), 7.5);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(3);
  auto a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
  auto c = num::matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0;
      for (std::size_t k = 0; k < 4; ++k) ref += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), ref, 1e-12);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    num::matmul(Td::zeros({2, 3}), Td::zeros({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, Examples) {
  auto a = num::softmax(Td::from({2}, {0, 0}), 0);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  auto b = num::softmax(Td::from({2}, {std::log(3.0), 0}), 0);
  EXPECT_NEAR(b[0], 0.75, 1e-15);
  EXPECT_NEAR(b[1], 0.25, 1e-15);
  auto c = num::softmax(Tensor<float>::from({2}, {1000.f, 1000.f}), 0);
  EXPECT_EQ(c[0], 0.5f);
  EXPECT_EQ(c[1], 0.5f);
}

TEST(Softmax, SlicesSumToOneOnAnyAxis) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_matrix(2 + trial % 5, 3 + trial % 7, rng, trial % 2 ? 50.0 : 1.0);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      auto y = num::softmax(x, axis);
      const std::size_t outer = axis == 0 ? x.cols() : x.rows();
      const std::size_t len = axis == 0 ? x.rows() : x.cols();
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0;
        for (std::size_t i = 0; i < len; ++i) {
          double v = axis == 0 ? y.at(i, o) : y.at(o, i);
          ASSERT_GE(v, 0.0);
          total += v;
        }
        ASSERT_NEAR(total, 1.0, 1e-6);
      }
    }
  }
}

TEST(LayerNorm, Examples) {
  auto ones = Td::filled({3}, 1), zeros = Td::zeros({3});
  auto c = num::layer_norm(Td::from({1, 3}, {5, 5, 5}), ones, zeros, 1e-5);
  for (auto v : c.data()) EXPECT_EQ(v, 0.0);
  auto n = num::layer_norm(Td::from({1, 2}, {1, -1}), Td::filled({2}, 1), Td::zeros({2}), 1e-5);
  EXPECT_NEAR(n[0], 1.0 / std::sqrt(1.0 + 1e-5), 1e-12);
  EXPECT_NEAR(n[1], -1.0 / std::sqrt(1.0 + 1e-5), 1e-12);
  auto collapsed = num::layer_norm(Td::from({2, 2}, {3, -8, 0.5, 9}), Td::zeros({2}), Td::filled({2}, 2), 1e-5);
  for (auto v : collapsed.data()) EXPECT_EQ(v, 2.0);
}

TEST(LayerNorm, RowsAreStandardised) {
  std::mt19937_64 rng(5);
  auto x = random_matrix(20, 16, rng, 3.0);
  auto y = num::layer_norm(x, Td::filled({16}, 1), Td::zeros({16}), 1e-5);
  for (std::size_t r = 0; r < 20; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 16; ++j) mean += y.at(r, j) / 16;
    for (std::size_t j = 0; j < 16; ++j) var += (y.at(r, j) - mean) * (y.at(r, j) - mean) / 16;
    EXPECT_LE(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Gelu, Examples) {
  auto y = num::gelu(Td::from({3}, {0, 10, 1}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 10.0, 1e-6);
  const long double oracle = 0.5L * (1 + erf_series(1 / std::sqrt(2.0L)));
  EXPECT_NEAR(y[2], static_cast<double>(oracle), 1e-14);
}

TEST(Bce, Examples) {
  auto zero = num::bce_with_logits(Td::zeros({1, 3}), Td::from({1, 3}, {1, 0, 1}));
  EXPECT_NEAR(zero.item(), std::log(2.0), 1e-15);
  auto sat = num::bce_with_logits(Td::from({1}, {50}), Td::from({1}, {1}));
  EXPECT_LT(sat.item(), 1e-20);
  EXPECT_THROW(num::bce_with_logits(Td::zeros({2}), Td::from({2}, {0.5, 1})), ValidationError);
}

TEST(Bce, MatchesDirectFormula) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> dist(0, 3);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(6), t(6);
    double ref = 0;
    for (int i = 0; i < 6; ++i) {
      z[i] = dist(rng);
      t[i] = coin(rng);
      const double s = 1 / (1 + std::exp(-z[i]));
      ref -= t[i] * std::log(s) + (1 - t[i]) * std::log(1 - s);
    }
    ref /= 6;
    EXPECT_NEAR(num::bce_with_logits(Td::from({6}, z), Td::from({6}, t)).item(), ref, 1e-10);
  }
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto w = Td::from({3}, {1, -2, 3}).set_requires_grad();
  std::vector<Td> params{w};
  num::AdamState<double> state(params);
  {
    num::Tape<double> tape;
    num::TapeScope<double> scope(tape);
    tape.backward(num::scale(num::sum(w), 0.0));
  }
  num::adam_step<double>(params, state, {});
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], -2.0);
  EXPECT_EQ(w[2], 3.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto w = Td::from({1}, {0.3}).set_requires_grad();
  std::vector<Td> params{w};
  num::AdamState<double> state(params);
  {
    num::Tape<double> tape;
    num::TapeScope<double> scope(tape);
    tape.backward(num::scale(w, -4.2));
  }
  num::adam_step<double>(params, state, {.lr = 1e-4});
  EXPECT_NEAR(w[0] - 0.3, 1e-4, 1e-10);
}

TEST(Adam, DescendsOnQuadratic) {
  auto w = Td::from({1, 1}, {1.0}).set_requires_grad();
  std::vector<Td> params{w};
  num::AdamState<double> state(params);
  const double f0 = 1.0;
  for (int step = 0; step < 2; ++step) {
    num::zero_grad<double>(params);
    num::Tape<double> tape;
    num::TapeScope<double> scope(tape);
    tape.backward(num::matmul(w, w));
    num::adam_step<double>(params, state, {.lr = 0.1});
  }
  EXPECT_LT(w[0] * w[0], f0);
}

TEST(GradCheck, SumHasAllOnesGradient) {
  std::mt19937_64 rng(1);
  auto report = num::grad_check<double>([](auto in) { return num::sum(in[0]); }, {random_matrix(3, 4, rng)});
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.coordinates, 12u);
  EXPECT_LT(report.max_rel_error, 1e-9);
}

TEST(GradCheck, SoftmaxPooledBce) {
  std::mt19937_64 rng(4);
  auto tokens = random_matrix(3, 2, rng), w = random_matrix(2, 1, rng);
  auto fn = [](std::span<const Td> in) {
    auto weights = num::softmax(num::matmul(in[0], in[1]), 0);  // 3 x 1, over tokens
    auto pooled = num::matmul(num::transpose(weights), in[0]);   // 1 x 2
    return num::bce_with_logits(pooled, Td::from({1, 2}, {1, 0}));
  };
  auto report = num::grad_check<double>(fn, {tokens, w});
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
  EXPECT_LE(report.max_rel_error, 1e-4);
}

TEST(GradCheck, DetectsSignFlippedGeluBackward) {
  std::mt19937_64 rng(2);
  num::fault::gelu_backward_sign_flip = true;
  auto report = num::grad_check<double>([](auto in) { return num::sum(num::gelu(in[0])); }, {random_matrix(2, 3, rng)});
  num::fault::gelu_backward_sign_flip = false;
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(report.failures.size(), 6u);  // every coordinate reported
}

// Each primitive's backward against central differences over 100 seeds.
TEST(GradCheck, EveryPrimitiveOverManySeeds) {
  using Fn = num::ScalarFn<double>;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t m = 2 + seed % 3, n = 2 + (seed / 3) % 3;
    auto x = random_matrix(m, n, rng), y = random_matrix(m, n, rng), w = random_matrix(n, 2, rng);
    auto mix = random_matrix(m, n, rng);  // fixed projection so each output coordinate matters
    auto weigh = [mix](const Td& t) { return num::sum(num::matmul(t, num::transpose(mix.detach()))); };
    std::vector<std::pair<const char*, std::pair<Fn, std::vector<Td>>>> cases = {
        {"matmul", {[](auto in) { return num::sum(num::gelu(num::matmul(in[0], in[1]))); }, {x, w}}},
        {"transpose", {[](auto in) { return num::sum(num::gelu(num::transpose(in[0]))); }, {x}}},
        {"add", {[](auto in) { return num::sum(num::gelu(num::add(in[0], in[1]))); }, {x, y}}},
        {"add_bias", {[](auto in) { return num::sum(num::gelu(num::add_bias(in[0], in[1]))); },
                      {x, random_matrix(1, n, rng)}}},
        {"scale", {[](auto in) { return num::sum(num::gelu(num::scale(in[0], 0.7))); }, {x}}},
        {"softmax0", {[weigh](auto in) { return weigh(num::softmax(in[0], 0)); }, {x}}},
        {"softmax1", {[weigh](auto in) { return weigh(num::softmax(in[0], 1)); }, {x}}},
        {"layer_norm", {[weigh](auto in) { return weigh(num::layer_norm(in[0], in[1], in[2])); },
                        {x, random_matrix(1, n, rng), random_matrix(1, n, rng)}}},
        {"gelu", {[weigh](auto in) { return weigh(num::gelu(in[0])); }, {x}}},
        {"bce", {[](auto in) { return num::bce_with_logits(in[0], Td::from({1, 2}, {1, 0})); }, {random_matrix(1, 2, rng)}}},
        {"slice_concat", {[](auto in) {
                            auto a = num::slice_cols(in[0], 1, 1), b = num::slice_rows(in[0], 0, 1);
                            auto c = num::concat_rows<double>({num::transpose(a), b, num::repeat_rows(num::slice_rows(in[0], 1, 1), 2)});
                            return num::sum(num::gelu(num::concat_cols<double>({c, c})));
                          },
                          {random_matrix(2, 2, rng)}}},
        {"gather", {[](auto in) {
                      std::vector<std::size_t> ids{2, 0, 2};
                      return num::sum(num::gelu(num::gather_rows(in[0], ids)));
                    },
                    {random_matrix(3, 2, rng)}}},
    };
    for (auto& [name, c] : cases) {
      auto report = num::grad_check<double>(c.first, c.second);
      ASSERT_TRUE(report.passed()) << name << " seed " << seed << " err " << report.max_rel_error;
    }
  }
}

TEST(Tape, ComposedFlopsEqualSumOfPrimitives) {
  std::mt19937_64 rng(7);
  auto x = random_matrix(5, 4, rng), w = random_matrix(4, 3, rng), b = random_matrix(1, 3, rng);
  num::Tape<double> tape;
  num::TapeScope<double> scope(tape);
  auto y = num::softmax(num::gelu(num::add_bias(num::matmul(x, w), b)), 1);
  auto ln = num::layer_norm(y, Td::filled({3}, 1), Td::zeros({3}));
  num::sum(num::scale(ln, 2.0));
  const std::uint64_t expected = 2 * 5 * 4 * 3 + 15 * (1 + 8 + 5 + 8 + 1 + 1);
  EXPECT_EQ(tape.flops(), expected);
}

TEST(Tape, BackwardVisitsEachOpOnceInReverse) {
  auto x = Td::from({1, 2}, {1, 2}).set_requires_grad();
  num::Tape<double> tape;
  num::TapeScope<double> scope(tape);
  auto y = num::sum(num::scale(num::add(x, x), 3.0));
  ASSERT_EQ(tape.size(), 3u);
  EXPECT_EQ(tape.op_name(0), "add");
  EXPECT_EQ(tape.op_name(2), "sum");
  EXPECT_EQ(tape.backward(y), 3u);
  EXPECT_EQ(x.grad()[0], 6.0);
  EXPECT_EQ(x.grad()[1], 6.0);
}

TEST(Tape, ForwardIsBitDeterministic) {
  auto run = [] {
    auto rng = make_rng(42, "det");
    auto x = normal_tensor<float>({8, 6}, 1.0, rng), w = normal_tensor<float>({6, 6}, 1.0, rng);
    auto y = num::softmax(num::gelu(num::matmul(x, w)), 1);
    return std::vector<float>(y.data().begin(), y.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Memory, TracksLiveAndPeakBytes) {
  const auto base = num::memory_stats().live_bytes;
  num::reset_peak_memory();
  {
    auto a = Tensor<float>::zeros({100});
    {
      auto b = Tensor<float>::zeros({50});
      EXPECT_EQ(num::memory_stats().live_bytes - base, 600);
    }
    EXPECT_EQ(num::memory_stats().live_bytes - base, 400);
  }
  EXPECT_EQ(num::memory_stats().live_bytes, base);
  EXPECT_EQ(num::memory_stats().peak_bytes - base, 600);
}

#include <gtest/gtest.h>

#include "me2et/complexity.hpp"

using namespace me2et;
using cost::Lengths;

namespace {

ModelConfig small_model(Variant v, std::size_t n) {
  ModelConfig m;
  m.d = 32;
  m.heads = 4;
  m.head_dim = 8;
  m.layers = 2;
  m.pool_tokens = 4;
  m.classes = 3;
  m.vocab = 50;
  m.text_tokens = n;
  m.visual_tokens = n;
  m.acoustic_tokens = n;
  m.visual_patch_dim = 12;
  m.acoustic_patch_dim = 10;
  m.variant = v;
  return m;
}

std::uint64_t tape_forward_flops(const ModelConfig& m, const Lengths& len) {
  Me2etModel<float> model(m, 3);
  const auto s = cost::detail::random_sample<float>(m, len, 3);
  num::Tape<float> tape;
  num::TapeScope<float> scope(tape);
  tape.reset_flops();
  model.forward(s);
  return tape.flops();
}

double ratio(std::size_t k, const Lengths& len) {
  const auto full = cost::flops_model(cost::paper_scale_model(Variant::full, k, len), len).total();
  const auto flat = cost::flops_model(cost::paper_scale_model(Variant::no_attention, k, len), len).total();
  return static_cast<double>(flat) / static_cast<double>(full);
}

}  // namespace

TEST(AnalyticFlops, MatchesTapeCountExactlyForEveryVariant) {
  for (auto v : {Variant::full, Variant::no_two_pass, Variant::no_attention, Variant::no_feature_fusion}) {
    const auto m = small_model(v, 16);
    const Lengths len{16, 16, 16};
    EXPECT_EQ(tape_forward_flops(m, len), cost::flops_model(m, len).total()) << to_string(v);
  }
}

TEST(AnalyticFlops, MatchesTapeCountAcrossUnequalLengths) {
  auto m = small_model(Variant::full, 0);
  const Lengths len{20, 13, 7};
  m.visual_tokens = len.visual;
  m.acoustic_tokens = len.acoustic;
  m.text_tokens = len.text;
  EXPECT_EQ(tape_forward_flops(m, len), cost::flops_model(m, len).total());
}

// One token, d = 1, one head, hidden width 4, counted by hand.
TEST(AnalyticFlops, HandCountedBlock) {
  const TransformerConfig cfg{1, 1, 1, 1, 4, 2};
  const auto t = cost::block_terms(1, cfg);
  EXPECT_EQ(t.qkv, 6u);
  EXPECT_EQ(t.scores, 2u);
  EXPECT_EQ(t.aggregation, 2u);
  EXPECT_EQ(t.projection, 2u);
  EXPECT_EQ(t.ffn, 16u);
  // LN 2*8, scale+softmax 1+5, residuals 2, FFN biases 4+1, GELU 4*8
  EXPECT_EQ(t.elementwise, 16u + 6u + 2u + 5u + 32u);
  EXPECT_EQ(t.total(), 89u);
  // gate 1, scoring 2*1*2*1*1, bias 1, softmax 5, aggregation 2
  EXPECT_EQ(cost::flops_pool(1, 1, 1, 1), 13u);
}

TEST(AnalyticFlops, AttentionIsQuadraticPoolIsLinear) {
  const TransformerConfig cfg{64, 4, 16, 1, 4, 4096};
  for (std::uint64_t n : {8u, 100u, 576u}) {
    EXPECT_EQ(cost::block_terms(2 * n, cfg).scores, 4 * cost::block_terms(n, cfg).scores);
    EXPECT_EQ(cost::block_terms(2 * n, cfg).aggregation, 4 * cost::block_terms(n, cfg).aggregation);
    EXPECT_EQ(cost::block_terms(2 * n, cfg).ffn, 2 * cost::block_terms(n, cfg).ffn);
    EXPECT_EQ(cost::flops_pool(2 * n, 2, 64, 16), 2 * cost::flops_pool(n, 2, 64, 16));
  }
}

TEST(FlopsRatio, PaperScaleSavingsAtLeast2_5AndShrinkWithK) {
  const Lengths len;  // Q=576, M=512
  EXPECT_GE(ratio(32, len), 2.5);
  double prev = 1e300;
  for (std::size_t k : {16u, 32u, 64u, 128u, 256u}) {
    const double r = ratio(k, len);
    EXPECT_LT(r, prev) << "K=" << k;
    prev = r;
  }
}

// With nothing to compress the pooled model only adds work.
TEST(FlopsRatio, NoSavingsWhenKEqualsSequenceLength) {
  for (std::size_t n : {32u, 128u, 512u}) {
    const Lengths len{n, n, 300};
    EXPECT_LE(ratio(n, len), 1.0) << n;
  }
}

TEST(FlopsRatio, SavingsGrowWithSequenceLength) {
  double prev = 0;
  for (std::size_t n : {128u, 256u, 512u, 1024u}) {
    const double r = ratio(64, {n, n, 300});
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(Bench, SingleRunHasZeroSpread) {
  const Lengths len{8, 8, 8};
  const auto m = small_model(Variant::full, 8);
  const auto r = cost::bench_time<float>(m, len, 1);
  EXPECT_EQ(r.runs, 1u);
  EXPECT_EQ(r.std_s, 0.0);
  EXPECT_GT(r.mean_s, 0.0);
  EXPECT_THROW(cost::bench_time<float>(m, len, 0), ValidationError);
}

TEST(Bench, MemoryPeakIsPositiveAndGrowsWithLength) {
  const auto small = cost::bench_memory<float>(small_model(Variant::no_attention, 8), {8, 8, 8});
  const auto large = cost::bench_memory<float>(small_model(Variant::no_attention, 64), {64, 64, 64});
  EXPECT_GT(small, 0);
  EXPECT_GT(large, small);
}

#include <cmath>

#include "copyhan/errors.hpp"
#include "support.hpp"

using namespace copyhan;
using namespace copyhan::testing;

namespace {

MultiHeadParams identity_heads(std::size_t d, std::size_t heads) {
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  MultiHeadParams p;
  p.wq = Tensor::from_data({d, d}, eye);
  p.wk = Tensor::from_data({d, d}, eye);
  p.wv = Tensor::from_data({d, d}, eye);
  p.wo = Tensor::from_data({d, d}, eye);
  p.bo = Tensor::zeros({1, d});
  p.heads = heads;
  return p;
}

}  // namespace

TEST(Attention, SingletonKeyReturnsItsValue) {
  auto q = Tensor::from_data({3, 2}, {0.3, -1.0, 4.0, 2.0, 0.0, 0.0});
  auto k = Tensor::from_data({1, 2}, {0.5, 0.25});
  auto v = Tensor::from_data({1, 3}, {7.0, -2.0, 0.5});
  const auto r = scaled_dot_attention(q, k, v);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.head_weights[0].at(i, 0), 1.0);
    EXPECT_EQ(r.output.row_values(i), (std::vector<double>{7.0, -2.0, 0.5}));
  }
}

TEST(Attention, OrthonormalQueriesGiveNearUniformWeightsForWideKeys) {
  // Q = K = two standard basis rows of width r: the logits are 1/sqrt(r) on the
  // diagonal and 0 elsewhere, so the diagonal weight is 1/(1 + exp(-1/sqrt(r))).
  for (std::size_t r : {2u, 16u, 400u}) {
    std::vector<double> rows(2 * r, 0.0);
    rows[0] = 1.0;
    rows[r + 1] = 1.0;
    auto q = Tensor::from_data({2, r}, rows);
    const auto res = scaled_dot_attention(q, q, q);
    const double diag = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(static_cast<double>(r))));
    EXPECT_NEAR(res.head_weights[0].at(0, 0), diag, 1e-15);
    EXPECT_NEAR(res.head_weights[0].at(0, 1), 1.0 - diag, 1e-15);
    EXPECT_NEAR(res.head_weights[0].at(1, 1), diag, 1e-15);
    if (r == 400) {
      EXPECT_LT(std::abs(res.head_weights[0].at(0, 0) - 0.5), 0.02);
    }
  }
}

TEST(Attention, CausalMaskZeroesTheUpperTriangle) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({5, 4}, rng);
  const auto mask = causal_mask(5);
  const auto r = scaled_dot_attention(x, x, x, &mask);
  const auto& w = r.head_weights[0];
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      if (j > i) EXPECT_EQ(w.at(i, j), 0.0);
      else EXPECT_GT(w.at(i, j), 0.0);
    }
    EXPECT_NEAR(row_sum(w, i), 1.0, 1e-12);
  }
}

TEST(Attention, FullyMaskedRowIsAContractError) {
  auto x = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  AttentionMask mask{false, false, true, true};
  EXPECT_THROW(scaled_dot_attention(x, x, x, &mask), ContractError);
}

TEST(Attention, WidthMismatchNamesBothWidths) {
  auto q = Tensor::zeros({1, 3});
  auto k = Tensor::zeros({2, 2});
  try {
    scaled_dot_attention(q, k, k);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos);
  }
}

TEST(MultiHeadAttention, SingleIdentityHeadMatchesPlainAttention) {
  std::mt19937_64 rng(4);
  auto q = random_tensor({3, 4}, rng);
  auto kv = random_tensor({5, 4}, rng);
  const auto plain = scaled_dot_attention(q, kv, kv);
  const auto multi = multi_head_attention(q, kv, kv, identity_heads(4, 1));
  auto a = plain.output.data();
  auto b = multi.output.data();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(MultiHeadAttention, ShapesAndPerHeadNormalisation) {
  std::mt19937_64 rng(5);
  MultiHeadParams p;
  p.wq = random_tensor({6, 6}, rng);
  p.wk = random_tensor({6, 6}, rng);
  p.wv = random_tensor({6, 6}, rng);
  p.wo = random_tensor({6, 6}, rng);
  p.bo = random_tensor({1, 6}, rng);
  p.heads = 3;
  for (std::size_t a : {1u, 2u, 7u}) {
    auto q = random_tensor({a, 6}, rng);
    auto kv = random_tensor({4, 6}, rng);
    const auto r = multi_head_attention(q, kv, kv, p);
    EXPECT_EQ(r.output.shape(), (Shape{a, 6}));
    ASSERT_EQ(r.head_weights.size(), 3u);
    for (const auto& w : r.head_weights) {
      EXPECT_EQ(w.shape(), (Shape{a, 4}));
      for (std::size_t i = 0; i < a; ++i) {
        double s = 0.0;
        for (double x : w.row_values(i)) {
          EXPECT_GE(x, 0.0);
          s += x;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(FeedForward, ZeroWeightsLeaveOnlyTheOuterBias) {
  FeedForwardParams p{{Tensor::zeros({2, 3}), Tensor::from_data({1, 3}, {1, -1, 2})},
                      {Tensor::zeros({3, 2}), Tensor::from_data({1, 2}, {0.25, -4})}};
  const auto y = positionwise_ffn(Tensor::from_data({2, 2}, {9, 9, -3, 1}), p);
  EXPECT_EQ(y.data()[0], 0.25);
  EXPECT_EQ(y.data()[1], -4.0);
  EXPECT_EQ(y.data()[2], 0.25);
  EXPECT_EQ(y.data()[3], -4.0);
}

TEST(FeedForward, HandComputedTwoThreeTwo) {
  // x W1 + b1 = [5, -0.5, -2]; relu -> [5, 0, 0]; times W2 plus b2 -> [5.1, 9.9].
  FeedForwardParams p{{Tensor::from_data({2, 3}, {1, -1, 0.5, 2, 0, -1}), Tensor::from_data({1, 3}, {0, 0.5, -0.5})},
                      {Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}), Tensor::from_data({1, 2}, {0.1, -0.1})}};
  const auto y = positionwise_ffn(Tensor::from_data({1, 2}, {1, 2}), p);
  EXPECT_NEAR(y.at(0, 0), 5.1, 1e-12);
  EXPECT_NEAR(y.at(0, 1), 9.9, 1e-12);
}

TEST(FeedForward, RowsAreIndependent) {
  std::mt19937_64 rng(6);
  FeedForwardParams p{{random_tensor({4, 7}, rng), random_tensor({1, 7}, rng)},
                      {random_tensor({7, 4}, rng), random_tensor({1, 4}, rng)}};
  auto x = random_tensor({5, 4}, rng);
  const auto batched = positionwise_ffn(x, p);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto single = positionwise_ffn(Tensor::row(x.row_values(r)), p);
    EXPECT_EQ(single.row_values(0), batched.row_values(r));
  }
}

TEST(TransformerConfig, RejectsIndivisibleHeads) {
  auto c = TransformerConfig::toy();
  c.vocab_src = c.vocab_tgt = 10;
  EXPECT_NO_THROW(c.validate());
  c.m_heads = 3;
  EXPECT_THROW(c.validate(), ContractError);
  c.m_heads = 2;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(TransformerConfig, FullScaleProfile) {
  const auto c = TransformerConfig::full_scale();
  EXPECT_EQ(c.d_model, 512u);
  EXPECT_EQ(c.n_layers, 6u);
  EXPECT_EQ(c.m_heads, 8u);
  EXPECT_EQ(c.vocab_tgt, 50000u);
  EXPECT_DOUBLE_EQ(c.dropout, 0.1);
  EXPECT_NO_THROW(c.validate());
}

class EncoderDecoder : public ::testing::Test {
 protected:
  Model model{small_config(), 11};
  const TransformerConfig& tc() { return model.config().transformer; }
};

TEST_F(EncoderDecoder, EncodingIsDeterministicAndRowsMatchTokens) {
  const TokenIds s{5, 6, 7, 8};
  const auto a = encode_sentence(s, model.transformer(), tc());
  const auto b = encode_sentence(s, model.transformer(), tc());
  EXPECT_EQ(a.states.shape(), (Shape{4, 8}));
  EXPECT_EQ(a.pad_mask.size(), 4u);
  EXPECT_TRUE(bitwise_equal(a.states, b.states));
}

TEST_F(EncoderDecoder, PermutationChangesStates) {
  const auto a = encode_sentence({5, 6, 7}, model.transformer(), tc());
  const auto b = encode_sentence({7, 6, 5}, model.transformer(), tc());
  // Without positions, self-attention is permutation equivariant and token 5
  // would get the same state in both orders.
  double diff = 0.0;
  for (std::size_t i = 0; i < 8; ++i) diff += std::abs(a.states.at(0, i) - b.states.at(2, i));
  EXPECT_GT(diff, 1e-6);
}

TEST_F(EncoderDecoder, OutOfRangeIdsMapToUnknown) {
  const auto a = encode_sentence({5, 99, -2}, model.transformer(), tc());
  const auto b = encode_sentence({5, kUnkId, kUnkId}, model.transformer(), tc());
  EXPECT_EQ(a.token_ids, (TokenIds{5, kUnkId, kUnkId}));
  EXPECT_TRUE(bitwise_equal(a.states, b.states));
  EXPECT_THROW(encode_sentence({}, model.transformer(), tc()), ContractError);
}

TEST_F(EncoderDecoder, TrainingModeAppliesDropout) {
  std::mt19937_64 rng(1);
  const auto eval = encode_sentence({5, 6, 7}, model.transformer(), tc());
  const auto train = encode_sentence({5, 6, 7}, model.transformer(), tc(), ForwardMode::train(rng));
  EXPECT_FALSE(bitwise_equal(eval.states, train.states));
}

TEST_F(EncoderDecoder, MinimalPrefixAndEmptyPrefix) {
  const auto enc = encode_sentence({5, 6}, model.transformer(), tc());
  const auto step = decode_step({kBosId}, enc, model.transformer(), tc());
  EXPECT_EQ(step.hidden.shape(), (Shape{1, 8}));
  for (double v : step.hidden.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(decode_step({}, enc, model.transformer(), tc()), ContractError);
}

TEST_F(EncoderDecoder, CausalityIsBitwise) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> tok(4, 11);
  const auto enc = encode_sentence({5, 6, 9, 4}, model.transformer(), tc());
  for (int trial = 0; trial < 20; ++trial) {
    TokenIds prefix{kBosId};
    const int len = 1 + trial % 5;
    for (int i = 0; i < len; ++i) prefix.push_back(tok(rng));
    TokenIds extended = prefix;
    const int extra = 1 + trial % 3;
    for (int i = 0; i < extra; ++i) extended.push_back(tok(rng));
    const auto short_pass = decoder_states(prefix, enc, model.transformer(), tc());
    const auto long_pass = decoder_states(extended, enc, model.transformer(), tc());
    EXPECT_TRUE(bitwise_equal(short_pass.states, slice_rows(long_pass.states, 0, prefix.size())));
  }
}

TEST_F(EncoderDecoder, CrossAttentionRowsSumToOne) {
  const auto enc = encode_sentence({5, 6, 9, 4, 10}, model.transformer(), tc());
  const auto step = decode_step({kBosId, 7, 8}, enc, model.transformer(), tc());
  ASSERT_EQ(step.cross_weights.size(), 2u);
  for (const auto& w : step.cross_weights) {
    EXPECT_EQ(w.shape(), (Shape{1, 5}));
    EXPECT_NEAR(row_sum(w, 0), 1.0, 1e-12);
  }
}

TEST(OutputDistribution, ZeroWeightsGiveUniform) {
  TransformerParams p;
  p.output = {Tensor::zeros({3, 6}), Tensor::zeros({1, 6})};
  const auto probs = output_distribution(Tensor::from_data({2, 3}, {1, 2, 3, -4, 5, 6}), p);
  for (double v : probs.data()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-15);
}

TEST(OutputDistribution, ShiftInvariance) {
  std::mt19937_64 rng(9);
  TransformerParams a, b;
  a.output = {random_tensor({4, 5}, rng), random_tensor({1, 5}, rng)};
  std::vector<double> shifted(a.output.bias.data().begin(), a.output.bias.data().end());
  for (double& v : shifted) v += 13.5;
  b.output = {a.output.weight, Tensor::from_data({1, 5}, shifted)};
  auto h = random_tensor({3, 4}, rng);
  auto pa = output_distribution(h, a).data();
  auto pb = output_distribution(h, b).data();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(pa[i], pb[i], 1e-14);
}

TEST(OutputDistribution, HandCaseWithFiveTypes) {
  // Logits [0, ln 2, ln 3, ln 4, 0] -> weights 1:2:3:4:1 out of 11.
  TransformerParams p;
  p.output = {Tensor::from_data({2, 5}, {0, std::log(2.0), std::log(3.0), std::log(4.0), 0, 1, 1, 1, 1, 1}),
              Tensor::zeros({1, 5})};
  const auto probs = output_distribution(Tensor::from_data({1, 2}, {1, 0}), p);
  const double expect[] = {1 / 11.0, 2 / 11.0, 3 / 11.0, 4 / 11.0, 1 / 11.0};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(probs.at(0, i), expect[i], 1e-15);
  EXPECT_NEAR(row_sum(probs, 0), 1.0, 1e-12);
}

TEST(CrossEntropy, PerfectOneHotIsZero) {
  const auto probs = Tensor::from_data({2, 3}, {0, 1, 0, 0, 0, 1});
  const auto r = cross_entropy(probs, {1, 2}, 0.0);
  EXPECT_EQ(r.loss.item(), 0.0);
  EXPECT_EQ(r.clamped, 0u);
}

TEST(CrossEntropy, UniformOverFourIsLnFour) {
  const auto probs = Tensor::filled({3, 4}, 0.25);
  EXPECT_NEAR(cross_entropy(probs, {0, 3, 2}, 0.0).loss.item(), std::log(4.0), 1e-15);
  // Smoothing does not move the uniform case: both targets see the same log.
  EXPECT_NEAR(cross_entropy(probs, {0, 3, 2}, 0.1).loss.item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, SmoothingClosedFormOnOneHot) {
  // One-hot prediction at the gold id: only the eps/|V| mass on the V-1 zero
  // entries contributes, each at -log(1e-12).
  const double eps = 0.1;
  const auto probs = Tensor::from_data({1, 4}, {0, 0, 1, 0});
  const auto r = cross_entropy(probs, {2}, eps);
  EXPECT_NEAR(r.loss.item(), eps * 3.0 / 4.0 * -std::log(1e-12), 1e-12);
  EXPECT_EQ(r.clamped, 0u);
}

TEST(CrossEntropy, SmoothedLossMatchesDirectSum) {
  std::mt19937_64 rng(10);
  auto logits = random_tensor({4, 6}, rng, -2, 2);
  const auto probs = softmax_lastdim(logits);
  const TokenIds gold{0, 5, 3, 3};
  const double eps = 0.1;
  double expect = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const double q = (j == static_cast<std::size_t>(gold[i]) ? 1.0 - eps : 0.0) + eps / 6.0;
      expect -= q * std::log(probs.at(i, j));
    }
  }
  EXPECT_NEAR(cross_entropy(probs, gold, eps).loss.item(), expect / 4.0, 1e-12);
}

TEST(CrossEntropy, ZeroGoldProbabilityIsClampedAndFlagged) {
  const auto probs = Tensor::from_data({2, 2}, {1, 0, 0.5, 0.5});
  const auto r = cross_entropy(probs, {1, 0}, 0.0);
  EXPECT_EQ(r.clamped, 1u);
  EXPECT_NEAR(r.loss.item(), (-std::log(1e-12) + std::log(2.0)) / 2.0, 1e-12);
  EXPECT_TRUE(std::isfinite(r.loss.item()));
}

TEST(CrossEntropy, LengthMismatchIsRejected) {
  EXPECT_THROW(cross_entropy(Tensor::filled({2, 3}, 1.0 / 3), {1}, 0.0), DimensionError);
}

TEST(TransformerGradients, EncoderLayerDecoderStepAndLoss) {
  Model model(tiny_config(), 21);
  const auto& tc = model.config().transformer;
  const TokenIds src{4, 5, 6};
  const TokenIds prefix{kBosId, 7, 8};
  const TokenIds gold{7, 8, kEosId};
  auto loss = [&] {
    const auto enc = encode_sentence(src, model.transformer(), tc);
    const auto pass = decoder_states(prefix, enc, model.transformer(), tc);
    return cross_entropy(output_distribution(pass.states, model.transformer()), gold, 0.1).loss;
  };
  expect_gradients_match(loss, model.group_tensors({ParamGroup::Base}));
}

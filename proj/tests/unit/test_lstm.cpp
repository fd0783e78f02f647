#include <gtest/gtest.h>

#include <cmath>

#include "seqval/acquisition.hpp"
#include "seqval/lstm.hpp"

using namespace seqval;

namespace {

ModelConfig tiny(std::size_t C = 4, std::size_t hidden = 8, std::size_t layers = 1, double drop = 0.0) {
  ModelConfig c;
  c.embedding_dim = 5;
  c.hidden_dim = hidden;
  c.layers = layers;
  c.alphabet_size = C;
  c.seq_len = 3;
  c.input_dropout = drop;
  c.hidden_dropout = drop;
  return c;
}

template <class S>
void randomize(LstmModel<S>& m, std::uint64_t seed, double scale = 1.0) {
  Rng rng = make_rng(seed);
  for (auto& p : m.params()) p = static_cast<S>(scale * (uniform01(rng) - 0.5));
}

Sequence random_seq(Rng& rng, std::size_t T, std::size_t C) {
  Sequence s(T);
  for (auto& t : s) t = static_cast<TokenId>(uniform_index(rng, C));
  return s;
}

double logit(double p) { return std::log(p / (1 - p)); }

// Model whose every step outputs sigmoid(bias[c]) regardless of input.
LstmModel<double> constant_model(const std::vector<double>& probs) {
  LstmModel<double> m(tiny(probs.size()));
  for (std::size_t c = 0; c < probs.size(); ++c) m.output_bias()(static_cast<Eigen::Index>(c), 0) = logit(probs[c]);
  return m;
}

}  // namespace

TEST(Lstm, ZeroWeightsGiveOneHalf) {
  LstmModel<float> m(tiny());
  auto y = m.forward(Sequence{0, 3, 1, 2});
  ASSERT_EQ(y.cols(), 4);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_EQ(y(i), 0.5f);
}

TEST(Lstm, ParameterLayout) {
  LstmModel<float> m(tiny(4, 8, 2));
  const auto& t = m.tensors();
  ASSERT_EQ(t.size(), 9u);
  EXPECT_EQ(t[0].name, "embedding");
  EXPECT_EQ(t[0].cols, 5u);  // C + START
  EXPECT_EQ(t[1].name, "layer0.input");
  EXPECT_EQ(t[1].rows, 32u);
  EXPECT_EQ(t[4].name, "layer1.input");
  EXPECT_EQ(t[4].cols, 8u);
  EXPECT_EQ(t[8].name, "output.bias");
  m.initialize(3);
  for (std::size_t l = 0; l < 2; ++l) {
    auto b = m.bias(l);
    for (Eigen::Index i = 0; i < 32; ++i) EXPECT_EQ(b(i, 0), (i >= 8 && i < 16) ? 1.0f : 0.0f);
  }
  for (float w : std::vector<float>(m.params().begin(), m.params().begin() + 20)) {
    EXPECT_GE(w, -0.08f);
    EXPECT_LE(w, 0.08f);
  }
}

TEST(Lstm, DeterministicGivenMasks) {
  LstmModel<float> m(tiny(4, 8, 1, 0.3));
  randomize(m, 1);
  Rng rng = make_rng(2);
  auto masks = m.sample_masks(1, rng);
  Sequence s{1, 2, 3, 0, 1};
  auto a = m.forward(s, &masks), b = m.forward(s, &masks);
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Lstm, Causality) {
  LstmModel<double> m(tiny(4, 8, 2));
  randomize(m, 4);
  Rng rng = make_rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Sequence s = random_seq(rng, 8, 4);
    std::size_t t = uniform_index(rng, 8);
    Sequence u = s;
    for (std::size_t i = t; i < u.size(); ++i) u[i] = static_cast<TokenId>(uniform_index(rng, 4));
    auto a = m.forward(s), b = m.forward(u);
    // Column i depends on tokens before i only.
    for (std::size_t i = 0; i <= t; ++i)
      EXPECT_TRUE((a.col(static_cast<Eigen::Index>(i)).array() == b.col(static_cast<Eigen::Index>(i)).array()).all());
  }
}

TEST(Lstm, FirstOutputDependsOnlyOnStart) {
  LstmModel<double> m(tiny());
  randomize(m, 6);
  auto a = m.forward(Sequence{0, 1}), b = m.forward(Sequence{3});
  EXPECT_TRUE((a.col(0).array() == b.col(0).array()).all());
}

TEST(Lstm, RunnerMatchesForward) {
  LstmModel<double> m(tiny(4, 8, 2, 0.3));
  randomize(m, 7);
  Rng rng = make_rng(8);
  auto masks = m.sample_masks(3, rng);
  std::vector<Sequence> seqs{random_seq(rng, 6, 4), random_seq(rng, 6, 4), random_seq(rng, 6, 4)};
  LstmRunner<double> run(m, 3, masks);
  std::vector<TokenId> feed(3, static_cast<TokenId>(m.start_token()));
  for (std::size_t t = 0; t < 6; ++t) {
    auto logits = run.step(feed);
    for (std::size_t j = 0; j < 3; ++j) {
      Masks<double> one;
      one.input = masks.input.col(static_cast<Eigen::Index>(j));
      for (const auto& h : masks.hidden) one.hidden.push_back(h.col(static_cast<Eigen::Index>(j)));
      auto ref = m.forward_logits(seqs[j], &one);
      for (Eigen::Index c = 0; c < 4; ++c)
        EXPECT_NEAR(logits(c, static_cast<Eigen::Index>(j)), ref(c, static_cast<Eigen::Index>(t)), 1e-12);
      feed[j] = seqs[j][t];
    }
  }
}

TEST(Lstm, SequenceLogProb) {
  LstmModel<double> zero(tiny());
  EXPECT_NEAR(zero.sequence_log_prob_valid(Sequence{0, 1, 2, 3}), std::log(0.0625), 1e-12);
  auto m = constant_model({0.9, 0.3, 0.5, 0.5});
  EXPECT_NEAR(m.sequence_log_prob_valid(Sequence{1}), std::log(0.3), 1e-12);
  double lo = m.sequence_log_prob_valid(Sequence{0, 1, 0});
  auto m2 = constant_model({0.9, 0.31, 0.5, 0.5});
  EXPECT_GT(m2.sequence_log_prob_valid(Sequence{0, 1, 0}), lo);
}

TEST(Lstm, LikelihoodDecomposition) {
  LstmModel<double> m(tiny());
  randomize(m, 9, 3.0);
  Rng rng = make_rng(10);
  for (int k = 0; k < 100; ++k) {
    double s = m.sequence_log_prob_valid(random_seq(rng, 5, 4));
    EXPECT_NEAR(std::exp(s) + std::exp(log1mexp(s)), 1.0, 1e-6);
  }
}

TEST(Lstm, NllClosedForms) {
  LstmModel<double> m(tiny());
  std::vector<LabeledExample> pos{{Sequence{0, 1}, 1}}, neg{{Sequence{0, 1}, 0}};
  EXPECT_NEAR(m.nll(pos), -std::log(0.25), 1e-12);
  EXPECT_NEAR(m.nll(neg), -std::log(0.75), 1e-12);
}

TEST(Lstm, NllIsStableNearCertainty) {
  auto m = constant_model({1 - 1e-12, 0.5, 0.5, 0.5});
  std::vector<LabeledExample> neg{{Sequence{0, 0}, 0}};
  double loss = m.nll(neg);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, -std::log(2e-12), 1e-3);
}

TEST(Lstm, NllRejectsMixedLengthsAndBadTokens) {
  LstmModel<double> m(tiny());
  std::vector<LabeledExample> mixed{{Sequence{0, 1}, 1}, {Sequence{0}, 1}};
  EXPECT_THROW(m.nll(mixed), Error);
  std::vector<LabeledExample> bad{{Sequence{0, 4}, 1}};
  EXPECT_THROW(m.nll(bad), Error);
  EXPECT_THROW(m.forward(Sequence{0, 5}), Error);
}

namespace {

double max_relative_gradient_error(LstmModel<double>& m, const std::vector<LabeledExample>& batch,
                                   const Masks<double>* masks) {
  ParamVector<double> g;
  m.nll(batch, masks, &g);
  double worst = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    double orig = m.params()[k];
    const double h = 1e-5;
    m.params()[k] = orig + h;
    double lp = m.nll(batch, masks);
    m.params()[k] = orig - h;
    double lm = m.nll(batch, masks);
    m.params()[k] = orig;
    double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[k]) / std::max({std::abs(fd), std::abs(g[k]), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST(Lstm, GradientMatchesFiniteDifferences) {
  for (std::size_t layers : {1u, 2u}) {
    for (int trial = 0; trial < 5; ++trial) {
      LstmModel<double> m(tiny(4, 8, layers, 0.25));
      randomize(m, 100 + trial);
      Rng rng = make_rng(200 + trial);
      std::vector<LabeledExample> batch;
      for (int j = 0; j < 4; ++j) batch.push_back({random_seq(rng, 3, 4), j % 2});
      auto masks = m.sample_masks(batch.size(), rng);
      EXPECT_LT(max_relative_gradient_error(m, batch, &masks), 1e-3) << "layers " << layers << " trial " << trial;
      EXPECT_LT(max_relative_gradient_error(m, batch, nullptr), 1e-3);
    }
  }
}

TEST(Lstm, SinglePrecisionGradientTracksDoubleShadow) {
  LstmModel<double> md(tiny());
  randomize(md, 11);
  LstmModel<float> mf = md.cast<float>();
  Rng rng = make_rng(12);
  std::vector<LabeledExample> batch;
  for (int j = 0; j < 6; ++j) batch.push_back({random_seq(rng, 3, 4), j % 2});
  ParamVector<double> gd;
  ParamVector<float> gf;
  md.nll(batch, nullptr, &gd);
  mf.nll(batch, nullptr, &gf);
  double norm = 0, diff = 0;
  for (std::size_t k = 0; k < gd.size(); ++k) {
    norm += gd[k] * gd[k];
    diff += (gd[k] - gf[k]) * (gd[k] - gf[k]);
  }
  EXPECT_LT(std::sqrt(diff / norm), 1e-4);
}

TEST(Lstm, PredictThresholdIsInclusive) {
  EXPECT_TRUE(LstmModel<double>(tiny()).predict_valid(Sequence{0, 1, 2}));
  EXPECT_TRUE(constant_model({0.6, 0.6, 0.6, 0.6}).predict_valid(Sequence{0, 1, 2, 3}));
  auto m = constant_model({0.9, 0.49, 0.9, 0.9});
  EXPECT_FALSE(m.predict_valid(Sequence{0, 2, 1, 3}));
  EXPECT_TRUE(m.predict_valid(Sequence{0, 2, 2, 3}));
}

TEST(Lstm, NoDropoutDrawsAreIdentical) {
  LstmModel<float> m(tiny(4, 8, 1, 0.0));
  randomize(m, 13);
  auto draws = draw_posterior_samples(m, 16, 1);
  Sequence s{1, 2, 0};
  auto det = m.forward(s);
  Eigen::MatrixXf mean = Eigen::MatrixXf::Zero(det.rows(), det.cols());
  for (Eigen::Index k = 0; k < 16; ++k) {
    Masks<float> one;
    one.input = draws.input.col(k);
    for (const auto& h : draws.hidden) one.hidden.push_back(h.col(k));
    auto y = m.forward(s, &one);
    EXPECT_TRUE((y.array() == det.array()).all());
    mean += y;
  }
  mean /= 16.0f;
  EXPECT_LT((mean - det).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(Lstm, PosteriorDrawsAreReproducibleAndScaled) {
  LstmModel<float> m(tiny(4, 8, 1, 0.25));
  auto a = draw_posterior_samples(m, 16, 9), b = draw_posterior_samples(m, 16, 9), c = draw_posterior_samples(m, 16, 10);
  EXPECT_TRUE((a.input.array() == b.input.array()).all());
  EXPECT_FALSE((a.input.array() == c.input.array()).all());
  for (Eigen::Index i = 0; i < a.hidden[0].size(); ++i) {
    float v = a.hidden[0](i);
    EXPECT_TRUE(v == 0.0f || std::abs(v - 1.0f / 0.75f) < 1e-6f);
  }
}

TEST(Lstm, ConfigValidation) {
  ModelConfig c = tiny();
  c.hidden_dim = 0;
  EXPECT_THROW(c.validate(), Error);
  c = tiny();
  c.input_dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

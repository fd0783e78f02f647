#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "seqval/acquisition.hpp"
#include "seqval/pyexpr.hpp"
#include "seqval/sampling.hpp"
#include "seqval/smiles.hpp"

using namespace seqval;

namespace {

double chi2_critical(double dof, double alpha) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

ModelConfig plain(std::size_t C, std::size_t T = 4) {
  ModelConfig c;
  c.embedding_dim = 4;
  c.hidden_dim = 8;
  c.alphabet_size = C;
  c.seq_len = T;
  c.input_dropout = 0;
  c.hidden_dropout = 0;
  return c;
}

// Every step outputs sigmoid(bias[c]) whatever the prefix.
LstmModel<double> constant_model(const std::vector<double>& probs) {
  LstmModel<double> m(plain(probs.size()));
  for (std::size_t c = 0; c < probs.size(); ++c)
    m.output_bias()(static_cast<Eigen::Index>(c), 0) = std::log(probs[c] / (1 - probs[c]));
  return m;
}

std::set<std::string> all_valid(const SequenceValidator& v, std::size_t T) {
  std::set<std::string> out;
  for (const auto& s : enumerate_valid(v.alphabet(), T, v, true).sequences) out.insert(detokenize(s, v.alphabet()));
  return out;
}

}  // namespace

TEST(Boltzmann, ConstantHalfIsUniformAtAnyTemperature) {
  LstmModel<double> m(plain(4));
  for (double tau : {1e-3, 0.1, 10.0}) {
    auto s = boltzmann_sample(m, tau, 300, 2, 1);
    for (const auto& x : s) EXPECT_NEAR(x.log_prob, -2 * std::log(4.0), 1e-12);
  }
  auto s = boltzmann_sample(m, 0.05, 40000, 1, 2);
  std::vector<double> counts(4);
  for (const auto& x : s) counts[x.sequence[0]] += 1;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - 10000) * (c - 10000) / 10000;
  EXPECT_LT(chi2, chi2_critical(3, 0.01));
}

TEST(Boltzmann, LargeTemperatureApproachesUniform) {
  auto m = constant_model({0.9, 0.1, 0.5});
  std::vector<double> y{0.9, 0.1, 0.5}, lp;
  boltzmann_log_probs(y, 1e6, lp);
  for (double v : lp) EXPECT_NEAR(v, -std::log(3.0), 1e-6);
  auto s = boltzmann_sample(m, 1e6, 10, 3, 3);
  for (const auto& x : s) EXPECT_NEAR(x.log_prob, -3 * std::log(3.0), 1e-5);
}

TEST(Boltzmann, TinyTemperatureIsGreedy) {
  auto m = constant_model({0.3, 0.8, 0.79, 0.1});
  for (const auto& x : boltzmann_sample(m, 1e-6, 500, 4, 4)) {
    EXPECT_EQ(x.sequence, (Sequence{1, 1, 1, 1}));
    EXPECT_NEAR(x.log_prob, 0.0, 1e-12);
  }
}

TEST(Boltzmann, LogProbMatchesPolicy) {
  LstmModel<double> m(plain(3, 5));
  Rng rng = make_rng(5);
  for (auto& p : m.params()) p = 2 * (uniform01(rng) - 0.5);
  auto policy = model_policy(m, 0.25);
  for (const auto& x : boltzmann_sample(m, 0.25, 20, 5, 6)) {
    double lp = 0;
    for (std::size_t t = 0; t < x.sequence.size(); ++t)
      lp += policy(std::span<const TokenId>(x.sequence.data(), t))[x.sequence[t]];
    EXPECT_NEAR(x.log_prob, lp, 1e-9);
  }
}

TEST(Boltzmann, DeterministicAcrossThreads) {
  LstmModel<float> m(plain(5, 6));
  m.initialize(7);
  auto a = boltzmann_sample(m, 0.5, 700, 6, 8, 1), b = boltzmann_sample(m, 0.5, 700, 6, 8, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sequence, b[i].sequence);
    EXPECT_EQ(a[i].log_prob, b[i].log_prob);
  }
}

TEST(GroundTruth, TinyExpressionSpace) {
  Alphabet a = Alphabet::from_chars("1+");
  ExpressionValidator v(a);
  BruteForcePrefixOracle o(v);
  auto s = ground_truth_sample(o, 3, 2000, 1);
  std::map<std::string, int> seen;
  for (const auto& x : s) {
    ++seen[detokenize(x.sequence, a)];
    EXPECT_NEAR(x.log_prob, -std::log(4.0), 1e-12);
  }
  std::set<std::string> support;
  for (const auto& [k, n] : seen) support.insert(k);
  EXPECT_EQ(support, (std::set<std::string>{"111", "1+1", "+11", "++1"}));
  EXPECT_EQ(support, all_valid(v, 3));
  EXPECT_NEAR(estimate_entropy(s).nats, std::log(4.0), 1e-12);
}

TEST(GroundTruth, AlwaysValid) {
  Alphabet a = expression_alphabet();
  ExpressionValidator v(a);
  BruteForcePrefixOracle o(v);
  for (const auto& x : ground_truth_sample(o, 5, 10000, 2)) EXPECT_TRUE(v.check(x.sequence).valid);
  Alphabet sa = smiles_alphabet();
  SmilesPrefixOracle so(sa);
  SmilesValidator sv(sa);
  for (const auto& x : ground_truth_sample(so, 12, 2000, 3)) EXPECT_TRUE(sv.check(x.sequence).valid);
}

TEST(GroundTruth, DeadEndWhenNothingIsValid) {
  Alphabet a = Alphabet::from_chars("(+");
  ExpressionValidator v(a);
  BruteForcePrefixOracle o(v);
  EXPECT_THROW(ground_truth_sample(o, 3, 10, 1), DeadEnd);
}

TEST(Entropy, Estimates) {
  std::vector<Sample> det(5, Sample{{0, 1}, 0.0});
  EXPECT_EQ(estimate_entropy(det).nats, 0.0);
  std::vector<Sample> one{Sample{{0}, std::log(0.2)}};
  EXPECT_NEAR(estimate_entropy(one).nats, -std::log(0.2), 1e-15);
  EXPECT_THROW(estimate_entropy(std::vector<Sample>{}), Error);
}

TEST(Entropy, UniformPolicyOverFourTokens) {
  auto samples = boltzmann_sample(LstmModel<double>(plain(4)), 1.0, 5000, 2, 9);
  auto e = estimate_entropy(samples);
  EXPECT_LE(std::abs(e.nats - 2 * std::log(4.0)), 3 * e.stderr_nats + 1e-12);
  EXPECT_NEAR(e.nats, 2.7726, 5e-5);
}

TEST(Entropy, MonteCarloMatchesExactTree) {
  Alphabet a = Alphabet::from_chars("12+*");
  ExpressionValidator v(a);
  LstmModel<double> m(plain(a.size(), 4));
  Rng rng = make_rng(10);
  for (auto& p : m.params()) p = 3 * (uniform01(rng) - 0.5);
  for (double tau : {0.05, 0.25}) {
    auto exact = exact_policy_stats(model_policy(m, tau), v, 4);
    auto samples = boltzmann_sample(m, tau, 20000, 4, 11);
    auto e = estimate_entropy(samples);
    EXPECT_LE(std::abs(e.nats - exact.entropy), 3 * e.stderr_nats + 1e-9) << "tau " << tau;
    double valid = 0;
    for (const auto& s : samples) valid += v.check(s.sequence).valid;
    double f = valid / 20000;
    EXPECT_LE(std::abs(f - exact.valid_mass), 3 * std::sqrt(exact.valid_mass * (1 - exact.valid_mass) / 20000) + 1e-9);
  }
}

TEST(PolicyTree, UniformPolicy) {
  Alphabet a = Alphabet::from_chars("1+");
  ExpressionValidator v(a);
  auto st = exact_policy_stats(model_policy(LstmModel<double>(plain(2)), 1.0), v, 3);
  EXPECT_NEAR(st.entropy, 3 * std::log(2.0), 1e-12);
  EXPECT_EQ(st.support, 8u);
  EXPECT_EQ(st.valid_support, 4u);
  EXPECT_NEAR(st.valid_mass, 0.5, 1e-12);
}

TEST(VhAuc, Values) {
  EXPECT_EQ(vh_auc({{0.1, 0.4, 3.0, 10}}), 0.0);
  std::vector<EvalPoint> pts{{1.0, 1.0, 2.0, 1}, {0.1, 0.2, 10.0, 1}, {0.5, 0.6, 6.0, 1}};
  EXPECT_NEAR(vh_auc(pts), 0.4 * 8 + 0.4 * 4, 1e-12);
  std::vector<EvalPoint> dup{{0.1, 0.2, 10.0, 1}, {0.2, 0.2, 8.0, 1}, {0.3, 0.6, 4.0, 1}};
  EXPECT_NEAR(vh_auc(dup), 0.4 * (9.0 + 4.0) / 2, 1e-12);
}

TEST(Curve, GroundTruthSamplerIsFullyValid) {
  Alphabet a = Alphabet::from_chars("1+");
  ExpressionValidator v(a);
  BruteForcePrefixOracle o(v);
  Sampler gt = [&](double, std::size_t n, std::uint64_t seed) { return ground_truth_sample(o, 3, n, seed); };
  auto r = validity_entropy_curve(gt, v, {0.1, 1.0}, 500, 1);
  ASSERT_EQ(r.points.size(), 2u);
  for (const auto& p : r.points) {
    EXPECT_EQ(p.validity, 1.0);
    EXPECT_NEAR(p.entropy, std::log(4.0), 1e-12);
  }
  EXPECT_EQ(r.auc, 0.0);
}

TEST(Curve, UniformModelValidityMatchesEnumeration) {
  Alphabet a = Alphabet::from_chars("12+*");
  ExpressionValidator v(a);
  LstmModel<double> m(plain(a.size()));
  const double f = static_cast<double>(all_valid(v, 4).size()) / 256.0;
  auto r = validity_entropy_curve(model_sampler(m, 4), v, {1.0}, 20000, 2);
  EXPECT_LE(std::abs(r.points[0].validity - f), 3 * std::sqrt(f * (1 - f) / 20000));
  EXPECT_NEAR(r.points[0].entropy, 4 * std::log(4.0), 1e-9);
}

TEST(Curve, RejectsBadGrids) {
  Alphabet a = Alphabet::from_chars("1+");
  ExpressionValidator v(a);
  LstmModel<double> m(plain(2));
  EXPECT_THROW(validity_entropy_curve(model_sampler(m, 3), v, {}, 10, 1), Error);
  EXPECT_THROW(validity_entropy_curve(model_sampler(m, 3), v, {1.0, 0.5}, 10, 1), Error);
}

TEST(Curve, ReportCsvRoundTrip) {
  EvalReport r;
  r.points = {{0.005, 0.5, 1.25, 100}, {0.1, 0.25, 3.0, 100}};
  r.auc = vh_auc(r.points);
  std::stringstream ss;
  write_report_csv(ss, r);
  auto back = read_report_csv(ss);
  ASSERT_EQ(back.points.size(), 2u);
  EXPECT_EQ(back.points[0].tau, 0.005);
  EXPECT_EQ(back.points[1].entropy, 3.0);
  EXPECT_EQ(back.points[1].n, 100u);
  std::stringstream bad("nope\n");
  EXPECT_THROW(read_report_csv(bad), ParseError);
}

TEST(Coverage, TinySpace) {
  Alphabet a = Alphabet::from_chars("1+");
  ExpressionValidator v(a);
  auto r = estimate_coverage(LstmModel<double>(plain(2)), v, 1.0, 20000, 3, 4);
  EXPECT_LE(std::abs(r.f_plus - 0.5), 3 * std::sqrt(0.25 / 20000));
  EXPECT_NEAR(r.log_space, 3 * std::log(2.0), 1e-12);
  EXPECT_NEAR(r.n_plus, r.f_plus * 8, 1e-9);
  EXPECT_NEAR(r.n_model, 8.0, 1e-9);
}

TEST(Coverage, DeterministicPolicyCoversOneSequence) {
  Alphabet a = Alphabet::from_chars("1+");
  ExpressionValidator v(a);
  auto m = constant_model({0.9, 0.2});
  auto r = estimate_coverage(m, v, 1e-6, 200, 3, 5);
  EXPECT_NEAR(r.entropy, 0.0, 1e-12);
  EXPECT_NEAR(r.n_model, 1.0, 1e-12);
  EXPECT_EQ(r.validity, 1.0);  // "111"
}

TEST(Coverage, IgnoresPadInTheSpaceSize) {
  Alphabet a = smiles_alphabet();
  SmilesValidator v(a);
  LstmModel<double> m(plain(a.size()));
  auto r = estimate_coverage(m, v, 1.0, 100, 5, 6);
  EXPECT_NEAR(r.log_space, 5 * std::log(static_cast<double>(a.emitted_size())), 1e-12);
}

TEST(Accuracy, SelfConsistencyAndThreshold) {
  Alphabet a = Alphabet::from_chars("12+*");
  ExpressionValidator v(a);
  LstmModel<double> m(plain(a.size()));
  Rng rng = make_rng(12);
  for (auto& p : m.params()) p = 2 * (uniform01(rng) - 0.5);
  Dataset self;
  for (const auto& s : sample_uniform(a, 4, 300, 13)) self.add({s, m.predict_valid(s) ? 1 : 0});
  EXPECT_EQ(model_accuracy(m, self), 1.0);
  Dataset balanced;
  for (const auto& s : enumerate_valid(a, 4, v, true).sequences) {
    balanced.add({s, 1});
    if (balanced.size() >= 40) break;
  }
  for (const auto& s : sample_uniform(a, 4, 500, 14))
    if (!v.check(s) && balanced.size() < 80) balanced.add({s, 0});
  ASSERT_EQ(balanced.size(), 80u);
  EXPECT_EQ(model_accuracy(LstmModel<double>(plain(a.size())), balanced), balanced.valid_fraction());
  EXPECT_EQ(model_accuracy(m, Dataset{}), 0.0);
}

namespace {

DecoderRows random_rows(std::size_t T, std::size_t C, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  DecoderRows rows(T, std::vector<double>(C));
  for (auto& r : rows)
    for (auto& w : r) w = 0.01 + uniform01(rng);
  return rows;
}

}  // namespace

TEST(MaskDecode, OracleMaskGivesValidSequences) {
  Alphabet a = expression_alphabet();
  ExpressionValidator v(a);
  BruteForcePrefixOracle o(v);
  OracleMasker masker(o);
  Rng rng = make_rng(15);
  for (int i = 0; i < 300; ++i) {
    auto r = mask_decode(random_rows(5, a.size(), 100 + i), masker, rng);
    EXPECT_TRUE(v.check(r.sequence).valid) << detokenize(r.sequence, a);
    EXPECT_EQ(r.fallbacks, 0u);
  }
}

TEST(MaskDecode, SmilesMaskGivesValidSequences) {
  Alphabet a = smiles_alphabet();
  SmilesValidator v(a);
  SmilesPrefixOracle o(a);
  SmilesMasker masker(o);
  Rng rng = make_rng(16);
  for (int i = 0; i < 300; ++i) {
    auto r = mask_decode(random_rows(20, a.size(), 200 + i), masker, rng);
    EXPECT_TRUE(v.check(r.sequence).valid) << detokenize(r.sequence, a);
  }
}

TEST(MaskDecode, PermissiveMaskEqualsUnmaskedDecoder) {
  DecoderRows rows{{1, 2, 3, 4}, {4, 0, 0, 1}};
  PermissiveMasker masker(4);
  Rng rng = make_rng(17);
  const int n = 40000;
  std::map<Sequence, double> counts;
  for (int i = 0; i < n; ++i) counts[mask_decode(rows, masker, rng).sequence] += 1;
  EXPECT_EQ(counts.size(), 8u);
  double chi2 = 0;
  for (TokenId a : {0, 1, 2, 3})
    for (TokenId b : {0, 3}) {
      double p = (rows[0][a] / 10.0) * (rows[1][b] / 5.0);
      double e = p * n, c = counts[Sequence{a, b}];
      chi2 += (c - e) * (c - e) / e;
    }
  EXPECT_LT(chi2, chi2_critical(7, 0.01));
}

TEST(MaskDecode, FallbackAndErrors) {
  auto m = constant_model({0.01, 0.02});
  ModelMasker<double> masker(m);
  Rng rng = make_rng(18);
  auto r = mask_decode({{1, 1}, {1, 1}, {1, 1}}, masker, rng);
  EXPECT_EQ(r.fallbacks, 3u);
  EXPECT_EQ(r.sequence.size(), 3u);
  auto ok = constant_model({0.9, 0.02});
  auto r2 = mask_decode({{1, 1}, {1, 1}}, ModelMasker<double>(ok), rng);
  EXPECT_EQ(r2.sequence, (Sequence{0, 0}));
  EXPECT_EQ(r2.fallbacks, 0u);
  PermissiveMasker p(2);
  try {
    mask_decode({{1, 1}, {0, 0}}, p, rng);
    FAIL();
  } catch (const EmptyRow& e) {
    EXPECT_EQ(e.step, 1u);
  }
  EXPECT_THROW(mask_decode({{1, 1, 1}}, p, rng), Error);
  EXPECT_THROW(mask_decode({{1, -1}}, p, rng), Error);
}

TEST(MaskDecode, ReadRows) {
  std::stringstream ok("# rows\n0.5,1\n\n2,0\n");
  auto rows = read_decoder_rows(ok);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], 2.0);
  std::stringstream bad("1,2\n1,x\n");
  try {
    read_decoder_rows(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 2u);
  }
  std::stringstream ragged("1,2\n1\n");
  EXPECT_THROW(read_decoder_rows(ragged), ParseError);
}

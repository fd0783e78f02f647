#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "seqval/acquisition.hpp"
#include "seqval/alphabet.hpp"
#include "seqval/dataset.hpp"
#include "seqval/error.hpp"
#include "seqval/lstm.hpp"
#include "seqval/prefix.hpp"
#include "seqval/rng.hpp"
#include "seqval/smiles.hpp"
#include "seqval/verdict.hpp"

namespace seqval {

struct Sample {
  Sequence sequence;
  double log_prob = 0;  // log π(x) under the sampling policy
};

/// Softmax of y/τ in log space. Equal outputs get equal probability.
inline void boltzmann_log_probs(std::span<const double> y, double tau, std::vector<double>& out) {
  double best = *std::max_element(y.begin(), y.end());
  out.resize(y.size());
  double z = 0;
  for (std::size_t c = 0; c < y.size(); ++c) z += std::exp((y[c] - best) / tau);
  double lz = std::log(z);
  for (std::size_t c = 0; c < y.size(); ++c) out[c] = (y[c] - best) / tau - lz;
}

inline std::size_t draw_from_log_probs(std::span<const double> lp, Rng& rng) {
  double u = uniform01(rng);
  for (std::size_t c = 0; c < lp.size(); ++c) {
    double p = std::exp(lp[c]);
    if (u < p) return c;
    u -= p;
  }
  for (std::size_t c = lp.size(); c-- > 0;)
    if (std::isfinite(lp[c])) return c;
  return lp.size() - 1;
}

inline constexpr std::size_t kSampleBlock = 256;

/// n sequences of length T from π(x_t = c | x_<t) ∝ exp(y(c | x_<t, w) / τ),
/// dropout off. Block b of 256 sequences uses RNG stream b.
template <class Scalar>
std::vector<Sample> boltzmann_sample(const LstmModel<Scalar>& model, double tau, std::size_t n, std::size_t T,
                                     std::uint64_t seed, std::size_t threads = 1) {
  if (!(tau > 0)) throw Error("temperature must be positive");
  const std::size_t C = model.alphabet_size();
  std::vector<Sample> out(n);
  const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * kSampleBlock, hi = std::min(n, lo + kSampleBlock), B = hi - lo;
    Rng rng = make_rng(seed, b);
    LstmRunner<Scalar> run(model, B);
    std::vector<TokenId> feed(B, static_cast<TokenId>(model.start_token()));
    std::vector<double> y(C), lp;
    for (std::size_t t = 0; t < T; ++t) {
      const auto& logits = run.step(feed);
      for (std::size_t j = 0; j < B; ++j) {
        for (std::size_t c = 0; c < C; ++c)
          y[c] = sigmoid(static_cast<double>(logits(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j))));
        boltzmann_log_probs(y, tau, lp);
        std::size_t pick = draw_from_log_probs(lp, rng);
        Sample& s = out[lo + j];
        s.sequence.push_back(static_cast<TokenId>(pick));
        s.log_prob += lp[pick];
        feed[j] = static_cast<TokenId>(pick);
      }
    }
  });
  return out;
}

/// Uniform choice among feasible tokens at every step. Sample i uses RNG stream i.
inline std::vector<Sample> ground_truth_sample(const PrefixOracle& oracle, std::size_t T, std::size_t n,
                                               std::uint64_t seed, std::size_t threads = 1) {
  const std::size_t C = oracle.alphabet().size();
  {
    bool any = false;
    for (TokenId c = 0; c < C && !any; ++c) any = T > 0 && oracle.feasible(std::span<const TokenId>(&c, 1), T - 1);
    if (!any) throw DeadEnd();
  }
  std::vector<Sample> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    Sample& s = out[i];
    std::vector<TokenId> ok;
    for (std::size_t t = 0; t < T; ++t) {
      ok.clear();
      for (TokenId c = 0; c < C; ++c) {
        s.sequence.push_back(c);
        if (oracle.feasible(s.sequence, T - t - 1)) ok.push_back(c);
        s.sequence.pop_back();
      }
      if (ok.empty()) throw DeadEnd();
      s.sequence.push_back(ok[uniform_index(rng, ok.size())]);
      s.log_prob -= std::log(static_cast<double>(ok.size()));
    }
  });
  return out;
}

struct EntropyEstimate {
  double nats = 0;
  double stderr_nats = 0;
};

/// Monte Carlo policy entropy -(1/n) Σ log π(x_i) with its standard error.
inline EntropyEstimate estimate_entropy(std::span<const Sample> samples) {
  if (samples.empty()) throw Error("entropy estimate needs at least one sample");
  const auto n = static_cast<double>(samples.size());
  double m = 0, sq = 0;
  for (const auto& s : samples) m -= s.log_prob;
  m /= n;
  for (const auto& s : samples) sq += (-s.log_prob - m) * (-s.log_prob - m);
  EntropyEstimate e;
  e.nats = m;
  e.stderr_nats = samples.size() > 1 ? std::sqrt(sq / (n - 1) / n) : 0.0;
  return e;
}

struct EvalPoint {
  double tau = 0;
  double validity = 0;
  double entropy = 0;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<EvalPoint> points;
  double auc = 0;
};

/// Trapezoid area under entropy as a function of validity. Points with equal
/// validity are averaged first; fewer than two distinct validities give 0.
inline double vh_auc(std::vector<EvalPoint> points) {
  std::sort(points.begin(), points.end(), [](const EvalPoint& a, const EvalPoint& b) { return a.validity < b.validity; });
  std::vector<std::pair<double, double>> merged;
  for (std::size_t i = 0; i < points.size();) {
    std::size_t j = i;
    double h = 0;
    while (j < points.size() && points[j].validity == points[i].validity) h += points[j++].entropy;
    merged.emplace_back(points[i].validity, h / static_cast<double>(j - i));
    i = j;
  }
  double area = 0;
  for (std::size_t i = 1; i < merged.size(); ++i)
    area += (merged[i].first - merged[i - 1].first) * (merged[i].second + merged[i - 1].second) / 2;
  return area;
}

using Sampler = std::function<std::vector<Sample>(double tau, std::size_t n, std::uint64_t seed)>;

inline const std::vector<double>& default_tau_grid() {
  static const std::vector<double> grid{0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0};
  return grid;
}

/// Validity and entropy at each τ of an ascending grid; τ index j samples with stream j of `seed`.
inline EvalReport validity_entropy_curve(const Sampler& sampler, const SequenceValidator& validator,
                                         const std::vector<double>& taus, std::size_t n, std::uint64_t seed,
                                         std::size_t threads = 1) {
  if (taus.empty()) throw Error("temperature grid is empty");
  if (!std::is_sorted(taus.begin(), taus.end())) throw Error("temperature grid must be ascending");
  if (n < 1) throw Error("need at least one sample per temperature");
  EvalReport r;
  for (std::size_t j = 0; j < taus.size(); ++j) {
    auto samples = sampler(taus[j], n, derive_seed(seed, j));
    std::vector<char> ok(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) { ok[i] = validator.check(samples[i].sequence).valid; });
    EvalPoint p;
    p.tau = taus[j];
    p.n = samples.size();
    p.validity = static_cast<double>(std::count(ok.begin(), ok.end(), 1)) / static_cast<double>(p.n);
    p.entropy = estimate_entropy(samples).nats;
    r.points.push_back(p);
  }
  r.auc = vh_auc(r.points);
  return r;
}

template <class Scalar>
Sampler model_sampler(const LstmModel<Scalar>& model, std::size_t T, std::size_t threads = 1) {
  return [&model, T, threads](double tau, std::size_t n, std::uint64_t seed) {
    return boltzmann_sample(model, tau, n, T, seed, threads);
  };
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
  auto fmt = [](double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
  };
  out << "tau,validity,entropy_nats,n\n";
  for (const auto& p : r.points) out << fmt(p.tau) << ',' << fmt(p.validity) << ',' << fmt(p.entropy) << ',' << p.n << '\n';
}

inline EvalReport read_report_csv(std::istream& in) {
  EvalReport r;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "tau,validity,entropy_nats,n") throw ParseError("expected header 'tau,validity,entropy_nats,n'", 1);
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    EvalPoint p;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ls >> p.tau >> c1 >> p.validity >> c2 >> p.entropy >> c3 >> p.n) || c1 != ',' || c2 != ',' || c3 != ',')
      throw ParseError("malformed report row", lineno);
    r.points.push_back(p);
  }
  r.auc = vh_auc(r.points);
  return r;
}

struct CoverageReport {
  double f_plus = 0;
  double f_plus_stderr = 0;
  double log_space = 0;  // ln |X|
  double n_plus = 0;     // f+ |X|
  double entropy = 0;
  double n_model = 0;  // e^H
  double validity = 0;
};

/// f+ by uniform Monte Carlo over the non-PAD tokens, H from Boltzmann samples at τ.
template <class Scalar>
CoverageReport estimate_coverage(const LstmModel<Scalar>& model, const SequenceValidator& validator, double tau,
                                 std::size_t n, std::size_t T, std::uint64_t seed, std::size_t threads = 1) {
  if (n < 1) throw Error("coverage needs at least one sample");
  const Alphabet& a = validator.alphabet();
  CoverageReport r;
  auto uni = sample_uniform(a, T, n, derive_seed(seed, 0));
  std::vector<char> ok(n);
  parallel_for(n, threads, [&](std::size_t i) { ok[i] = validator.check(uni[i]).valid; });
  r.f_plus = static_cast<double>(std::count(ok.begin(), ok.end(), 1)) / static_cast<double>(n);
  r.f_plus_stderr = std::sqrt(r.f_plus * (1 - r.f_plus) / static_cast<double>(n));
  r.log_space = static_cast<double>(T) * std::log(static_cast<double>(a.emitted_size()));
  r.n_plus = r.f_plus * std::exp(r.log_space);
  auto samples = boltzmann_sample(model, tau, n, T, derive_seed(seed, 1), threads);
  parallel_for(n, threads, [&](std::size_t i) { ok[i] = validator.check(samples[i].sequence).valid; });
  r.validity = static_cast<double>(std::count(ok.begin(), ok.end(), 1)) / static_cast<double>(n);
  r.entropy = estimate_entropy(samples).nats;
  r.n_model = std::exp(r.entropy);
  return r;
}

/// Per-step log-probabilities over all C tokens given a prefix.
using StepPolicy = std::function<std::vector<double>(std::span<const TokenId> prefix)>;

template <class Scalar>
StepPolicy model_policy(const LstmModel<Scalar>& model, double tau) {
  return [&model, tau](std::span<const TokenId> prefix) {
    Sequence s(prefix.begin(), prefix.end());
    s.push_back(0);
    auto logits = model.forward_logits(s);
    std::vector<double> y(model.alphabet_size()), lp;
    for (std::size_t c = 0; c < y.size(); ++c)
      y[c] = sigmoid(static_cast<double>(logits(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(prefix.size()))));
    boltzmann_log_probs(y, tau, lp);
    return lp;
  };
}

struct PolicyTreeStats {
  double entropy = 0;               // exact H of the policy over length-T sequences
  std::uint64_t support = 0;        // sequences with positive probability
  std::uint64_t valid_support = 0;  // valid sequences with positive probability
  double valid_mass = 0;            // probability of emitting a valid sequence
};

/// Exact entropy by recursion over the C^T prefix tree: H = Σ_prefix p(prefix) H(step).
inline PolicyTreeStats exact_policy_stats(const StepPolicy& policy, const SequenceValidator& validator, std::size_t T) {
  const std::size_t C = validator.alphabet().size();
  guard_enumeration(C, T);
  PolicyTreeStats st;
  Sequence prefix;
  std::function<void(double)> visit = [&](double logp) {
    if (prefix.size() == T) {
      ++st.support;
      if (validator.check(prefix).valid) {
        ++st.valid_support;
        st.valid_mass += std::exp(logp);
      }
      return;
    }
    auto lp = policy(prefix);
    double p = std::exp(logp);
    for (TokenId c = 0; c < C; ++c) {
      if (!(lp[c] > -std::numeric_limits<double>::infinity()) || !(logp + lp[c] > -std::numeric_limits<double>::infinity()))
        continue;
      st.entropy -= p * std::exp(lp[c]) * lp[c];
      prefix.push_back(c);
      visit(logp + lp[c]);
      prefix.pop_back();
    }
  };
  visit(0.0);
  return st;
}

template <class Scalar>
double model_accuracy(const LstmModel<Scalar>& model, const Dataset& data, std::size_t threads = 1) {
  if (data.empty()) return 0.0;
  std::vector<char> hit(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto& e = data.examples[i];
    hit[i] = (model.predict_valid(e.sequence) ? 1 : 0) == e.label;
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(data.size());
}

/// Per-decode state of a masker.
class MaskSession {
 public:
  virtual ~MaskSession() = default;
  /// allowed[c] = 1 if token c may be emitted next with `remaining` tokens to follow it.
  virtual void allowed(std::vector<char>& out, std::size_t remaining) = 0;
  virtual void advance(TokenId t) = 0;
};

class StepMasker {
 public:
  virtual ~StepMasker() = default;
  virtual std::size_t alphabet_size() const = 0;
  virtual std::unique_ptr<MaskSession> start() const = 0;
};

class PermissiveMasker : public StepMasker {
 public:
  explicit PermissiveMasker(std::size_t C) : C_(C) {}
  std::size_t alphabet_size() const override { return C_; }
  std::unique_ptr<MaskSession> start() const override {
    struct S : MaskSession {
      std::size_t C;
      explicit S(std::size_t c) : C(c) {}
      void allowed(std::vector<char>& out, std::size_t) override { out.assign(C, 1); }
      void advance(TokenId) override {}
    };
    return std::make_unique<S>(C_);
  }

 private:
  std::size_t C_;
};

/// Ground-truth masking through any prefix oracle.
class OracleMasker : public StepMasker {
 public:
  explicit OracleMasker(const PrefixOracle& oracle) : oracle_(oracle) {}
  std::size_t alphabet_size() const override { return oracle_.alphabet().size(); }
  std::unique_ptr<MaskSession> start() const override {
    struct S : MaskSession {
      const PrefixOracle& o;
      Sequence prefix;
      explicit S(const PrefixOracle& oracle) : o(oracle) {}
      void allowed(std::vector<char>& out, std::size_t remaining) override {
        out.assign(o.alphabet().size(), 0);
        for (TokenId c = 0; c < out.size(); ++c) {
          prefix.push_back(c);
          out[c] = o.feasible(prefix, remaining);
          prefix.pop_back();
        }
      }
      void advance(TokenId t) override { prefix.push_back(t); }
    };
    return std::make_unique<S>(oracle_);
  }

 private:
  const PrefixOracle& oracle_;
};

/// Ground-truth masking that carries the SMILES automaton state between steps.
class SmilesMasker : public StepMasker {
 public:
  explicit SmilesMasker(const SmilesPrefixOracle& oracle) : oracle_(oracle) {}
  std::size_t alphabet_size() const override { return oracle_.alphabet().size(); }
  std::unique_ptr<MaskSession> start() const override {
    struct S : MaskSession {
      const SmilesPrefixOracle& o;
      SmilesState state;
      explicit S(const SmilesPrefixOracle& oracle) : o(oracle) {}
      void allowed(std::vector<char>& out, std::size_t remaining) override {
        out.assign(o.alphabet().size(), 0);
        for (TokenId c = 0; c < out.size(); ++c) {
          SmilesState next = state;
          o.automaton().step(next, c);
          out[c] = o.feasible_from(next, remaining);
        }
      }
      void advance(TokenId t) override { o.automaton().step(state, t); }
    };
    return std::make_unique<S>(oracle_);
  }

 private:
  const SmilesPrefixOracle& oracle_;
};

/// Learned masking: token c is allowed when y(c | x_<t) >= 0.5.
template <class Scalar>
class ModelMasker : public StepMasker {
 public:
  explicit ModelMasker(const LstmModel<Scalar>& model) : model_(model) {}
  std::size_t alphabet_size() const override { return model_.alphabet_size(); }
  std::unique_ptr<MaskSession> start() const override {
    struct S : MaskSession {
      LstmRunner<Scalar> run;
      TokenId last;
      explicit S(const LstmModel<Scalar>& m) : run(m, 1), last(static_cast<TokenId>(m.start_token())) {}
      void allowed(std::vector<char>& out, std::size_t) override {
        const auto& logits = run.step(std::span<const TokenId>(&last, 1));
        out.resize(static_cast<std::size_t>(logits.rows()));
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = logits(static_cast<Eigen::Index>(c), 0) >= Scalar(0);
      }
      void advance(TokenId t) override { last = t; }
    };
    return std::make_unique<S>(model_);
  }

 private:
  const LstmModel<Scalar>& model_;
};

using DecoderRows = std::vector<std::vector<double>>;

struct DecodeResult {
  Sequence sequence;
  std::size_t fallbacks = 0;  // steps where the mask removed every positive weight
};

/// Samples x_t ∝ f(x_t | z) · mask_t(x_t); falls back to the unmasked row when the mask empties it.
inline DecodeResult mask_decode(const DecoderRows& rows, const StepMasker& masker, Rng& rng) {
  const std::size_t C = masker.alphabet_size(), T = rows.size();
  auto session = masker.start();
  DecodeResult r;
  std::vector<char> allow;
  std::vector<double> w(C);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& row = rows[t];
    if (row.size() != C) throw Error("decoder row " + std::to_string(t) + " has " + std::to_string(row.size()) +
                                     " weights, expected " + std::to_string(C));
    double total = 0;
    for (double v : row) {
      if (!(v >= 0) || !std::isfinite(v)) throw Error("decoder row " + std::to_string(t) + " has a negative or non-finite weight");
      total += v;
    }
    if (total <= 0) throw EmptyRow(t);
    session->allowed(allow, T - t - 1);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += w[c] = allow[c] ? row[c] : 0.0;
    if (z <= 0) {
      ++r.fallbacks;
      w = row;
      z = total;
    }
    double u = uniform01(rng) * z;
    std::size_t pick = C;
    for (std::size_t c = 0; c < C; ++c) {
      if (w[c] <= 0) continue;
      pick = c;
      if (u < w[c]) break;
      u -= w[c];
    }
    r.sequence.push_back(static_cast<TokenId>(pick));
    session->advance(static_cast<TokenId>(pick));
  }
  return r;
}

/// CSV, one row of C non-negative weights per line; blank lines and '#' lines are skipped.
inline DecoderRows read_decoder_rows(std::istream& in) {
  DecoderRows rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("bad weight '" + cell + "'", lineno);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("row width differs from the first row", lineno);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace seqval

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "seqval/alphabet.hpp"
#include "seqval/dataset.hpp"
#include "seqval/error.hpp"
#include "seqval/lstm.hpp"
#include "seqval/rng.hpp"
#include "seqval/verdict.hpp"

namespace seqval {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written by index so the outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// n i.i.d. uniform sequences over the non-PAD tokens.
inline std::vector<Sequence> sample_uniform(const Alphabet& alphabet, std::size_t T, std::size_t n, std::uint64_t seed) {
  auto tokens = alphabet.emitted_tokens();
  Rng rng = make_rng(seed, 0x5a3d);
  std::vector<Sequence> out(n, Sequence(T));
  for (auto& s : out)
    for (auto& t : s) t = tokens[uniform_index(rng, tokens.size())];
  return out;
}

/// Labels each sequence with the validator.
inline Dataset label_sequences(const std::vector<Sequence>& seqs, const SequenceValidator& validator,
                               std::size_t threads = 1) {
  std::vector<int> labels(seqs.size());
  parallel_for(seqs.size(), threads, [&](std::size_t i) { labels[i] = validator.check(seqs[i]).valid ? 1 : 0; });
  Dataset ds;
  ds.alphabet_id = validator.alphabet().fingerprint();
  for (std::size_t i = 0; i < seqs.size(); ++i) ds.add({seqs[i], labels[i]});
  return ds;
}

struct AugmentationConfig {
  double gamma = 0.05;
  bool exclude_original = true;
};

/// Resamples each non-PAD position with probability gamma. Replacements are
/// drawn from the non-PAD tokens, excluding the original one when configured.
inline Sequence perturb(std::span<const TokenId> seq, const Alphabet& alphabet, const AugmentationConfig& cfg, Rng& rng) {
  if (!(cfg.gamma >= 0 && cfg.gamma <= 1)) throw Error("gamma must lie in [0, 1]");
  auto tokens = alphabet.emitted_tokens();
  Sequence out(seq.begin(), seq.end());
  for (auto& t : out) {
    if (alphabet.is_pad(t) || uniform01(rng) >= cfg.gamma) continue;
    if (cfg.exclude_original && tokens.size() > 1) {
      auto pos = static_cast<std::size_t>(std::find(tokens.begin(), tokens.end(), t) - tokens.begin());
      std::size_t k = uniform_index(rng, tokens.size() - 1);
      t = tokens[k >= pos ? k + 1 : k];
    } else {
      t = tokens[uniform_index(rng, tokens.size())];
    }
  }
  return out;
}

inline std::size_t hamming(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) d += a[i] != b[i];
  return d + std::max(a.size(), b.size()) - std::min(a.size(), b.size());
}

struct AugmentationStats {
  std::size_t total = 0;
  std::size_t valid = 0;
  double mean_hamming = 0;
  double mean_length = 0;  // non-PAD positions
  double valid_fraction() const { return total ? static_cast<double>(valid) / static_cast<double>(total) : 0.0; }
};

/// Tokenizes and validates a corpus; throws CorpusInvalidEntry on the first offender.
inline std::vector<Sequence> load_valid_corpus(const std::vector<std::string>& lines, const SequenceValidator& validator) {
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Sequence s;
    try {
      s = tokenize(lines[i], validator.alphabet());
    } catch (const Error& e) {
      throw CorpusInvalidEntry(i, e.what());
    }
    Verdict v = validator.check(s);
    if (!v.valid) throw CorpusInvalidEntry(i, v.reason);
    out.push_back(std::move(s));
  }
  return out;
}

/// Splits a corpus into (train, held-out) by shuffling with `seed`.
inline std::pair<std::vector<Sequence>, std::vector<Sequence>> split_corpus(std::vector<Sequence> corpus,
                                                                            double train_fraction, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x5b17);
  std::shuffle(corpus.begin(), corpus.end(), rng);
  auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(corpus.size())));
  cut = std::min(cut, corpus.size());
  std::vector<Sequence> train(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<Sequence> held(corpus.begin() + static_cast<std::ptrdiff_t>(cut), corpus.end());
  return {std::move(train), std::move(held)};
}

/// n perturbed copies cycling through the corpus (entry i mod size), labeled by
/// the validator and padded to T. Example i uses its own RNG stream.
inline Dataset build_augmented_dataset(const std::vector<Sequence>& corpus, const SequenceValidator& validator,
                                       std::size_t T, std::size_t n, const AugmentationConfig& cfg, std::uint64_t seed,
                                       AugmentationStats* stats = nullptr, std::size_t threads = 1) {
  const Alphabet& a = validator.alphabet();
  Dataset ds;
  ds.alphabet_id = a.fingerprint();
  if (corpus.empty() || n == 0) {
    if (stats) *stats = {};
    return ds;
  }
  for (const auto& s : corpus)
    if (s.size() > T) throw TooLong(s.size(), T);
  std::vector<Sequence> seqs(n);
  std::vector<int> labels(n);
  std::vector<std::size_t> dist(n), lens(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    const Sequence& src = corpus[i % corpus.size()];
    Sequence p = perturb(src, a, cfg, rng);
    dist[i] = hamming(p, src);
    lens[i] = strip_pad(src, a).size();
    seqs[i] = a.has_pad() ? pad_to(p, T, a) : p;
    labels[i] = validator.check(seqs[i]).valid ? 1 : 0;
  });
  AugmentationStats st;
  double dsum = 0, lsum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.add({std::move(seqs[i]), labels[i]});
    st.valid += static_cast<std::size_t>(labels[i]);
    dsum += static_cast<double>(dist[i]);
    lsum += static_cast<double>(lens[i]);
  }
  st.total = n;
  st.mean_hamming = dsum / static_cast<double>(n);
  st.mean_length = lsum / static_cast<double>(n);
  if (stats) *stats = st;
  return ds;
}

/// g(p) = -p log p - (1-p) log(1-p) in nats.
inline double bernoulli_entropy(double p) {
  double h = 0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (1 - p) * std::log1p(-p);
  return h;
}

/// α̂ = g(mean_k y_k) - mean_k g(y_k), clamped at 0.
inline double acquisition_score(std::span<const double> outputs) {
  if (outputs.empty()) throw Error("acquisition score needs at least one posterior draw");
  const double y0 = outputs.front();
  if (std::all_of(outputs.begin(), outputs.end(), [y0](double y) { return y == y0; })) return 0.0;
  double mean = 0, mean_g = 0;
  for (double y : outputs) {
    mean += y;
    mean_g += bernoulli_entropy(y);
  }
  const auto K = static_cast<double>(outputs.size());
  return std::max(0.0, bernoulli_entropy(mean / K) - mean_g / K);
}

/// K posterior draws w_k ~ q(w): dropout masks held fixed across time, one column per draw.
template <class Scalar>
Masks<Scalar> draw_posterior_samples(const LstmModel<Scalar>& model, std::size_t K, std::uint64_t seed) {
  if (K < 1) throw Error("K must be at least 1");
  Rng rng = make_rng(seed, 0xd7a3);
  return model.sample_masks(K, rng);
}

struct AcquisitionConfig {
  std::size_t K = 16;
  double theta = 0.05;
  std::size_t L = 64;

  void validate() const {
    if (K < 1 || L < 1 || !(theta > 0)) throw Error("acquisition requires K >= 1, L >= 1 and theta > 0");
  }
};

struct InformativeSequence {
  Sequence sequence;
  std::size_t score_evaluations = 0;
};

/// Builds x_1..x_T left to right, drawing each token from softmax(α̂/θ) over the non-PAD tokens.
template <class Scalar>
InformativeSequence generate_informative_sequence(const LstmModel<Scalar>& model, const Masks<Scalar>& draws,
                                                  const Alphabet& alphabet, double theta, std::size_t T, Rng& rng) {
  if (!(theta > 0)) throw Error("theta must be positive");
  if (alphabet.size() != model.alphabet_size()) throw Error("alphabet size does not match the model");
  const std::size_t K = draws.empty() ? 1 : draws.columns();
  const auto candidates = alphabet.emitted_tokens();
  LstmRunner<Scalar> run(model, K, draws);
  InformativeSequence out;
  std::vector<double> ys(K), alpha(candidates.size()), w(candidates.size());
  std::vector<TokenId> feed(K, static_cast<TokenId>(model.start_token()));
  for (std::size_t t = 0; t < T; ++t) {
    const auto& logits = run.step(feed);
    double best = -1;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      for (std::size_t k = 0; k < K; ++k)
        ys[k] = sigmoid(static_cast<double>(logits(candidates[c], static_cast<Eigen::Index>(k))));
      alpha[c] = acquisition_score(ys);
      best = std::max(best, alpha[c]);
      ++out.score_evaluations;
    }
    double z = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) z += w[c] = std::exp((alpha[c] - best) / theta);
    double u = uniform01(rng) * z;
    std::size_t pick = candidates.size() - 1;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (u < w[c]) {
        pick = c;
        break;
      }
      u -= w[c];
    }
    out.sequence.push_back(candidates[pick]);
    std::fill(feed.begin(), feed.end(), candidates[pick]);
  }
  return out;
}

/// L informative sequences labeled by the validator. Sequence i uses RNG
/// stream i of `seed` for both its posterior draws and its token choices.
template <class Scalar>
Dataset generate_active_batch(const LstmModel<Scalar>& model, const SequenceValidator& validator,
                              const AcquisitionConfig& cfg, std::size_t T, std::uint64_t seed, std::size_t threads = 1) {
  cfg.validate();
  std::vector<Sequence> seqs(cfg.L);
  parallel_for(cfg.L, threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    Masks<Scalar> draws = model.sample_masks(cfg.K, rng);
    seqs[i] = generate_informative_sequence(model, draws, validator.alphabet(), cfg.theta, T, rng).sequence;
  });
  return label_sequences(seqs, validator, threads);
}

/// A finite posterior over weight settings, each with its p(y=1 | x, w).
struct DiscretePosterior {
  std::vector<double> prior;
  std::vector<double> p_valid;
};

inline double entropy_nats(std::span<const double> p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

/// Expected reduction in posterior entropy over w after observing y.
inline double expected_entropy_reduction(const DiscretePosterior& post) {
  const std::size_t n = post.prior.size();
  double h0 = entropy_nats(post.prior), expected = 0;
  for (int y : {0, 1}) {
    std::vector<double> joint(n);
    double py = 0;
    for (std::size_t i = 0; i < n; ++i) {
      joint[i] = post.prior[i] * (y ? post.p_valid[i] : 1 - post.p_valid[i]);
      py += joint[i];
    }
    if (py <= 0) continue;
    for (auto& j : joint) j /= py;
    expected += py * entropy_nats(joint);
  }
  return h0 - expected;
}

/// Mutual information between y and w: g(E_w p) - E_w g(p).
inline double label_mutual_information(const DiscretePosterior& post) {
  double mean = 0, mean_g = 0;
  for (std::size_t i = 0; i < post.prior.size(); ++i) {
    mean += post.prior[i] * post.p_valid[i];
    mean_g += post.prior[i] * bernoulli_entropy(post.p_valid[i]);
  }
  return bernoulli_entropy(mean) - mean_g;
}

}  // namespace seqval

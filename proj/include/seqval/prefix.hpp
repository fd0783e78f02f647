#pragma once

#include <cmath>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqval/alphabet.hpp"
#include "seqval/error.hpp"
#include "seqval/verdict.hpp"

namespace seqval {

/// Exact prefix validator: feasible(prefix, r) is 1 iff some suffix of exactly
/// r more tokens (PAD included when the alphabet has it) makes the whole
/// sequence valid.
class PrefixOracle {
 public:
  virtual ~PrefixOracle() = default;
  virtual const Alphabet& alphabet() const = 0;
  virtual bool feasible(std::span<const TokenId> prefix, std::size_t remaining) const = 0;
};

inline constexpr double kEnumerationLimit = 1e7;

inline double space_size(std::size_t c, std::size_t t) { return std::pow(static_cast<double>(c), static_cast<double>(t)); }

inline void guard_enumeration(std::size_t c, std::size_t t) {
  double n = space_size(c, t);
  if (n > kEnumerationLimit) throw TooLargeToEnumerate(n);
}

struct SequenceHash {
  std::size_t operator()(const Sequence& s) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (TokenId t : s) {
      h ^= t + 0x9E3779B97F4A7C15ULL;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Depth-first search over suffixes, stopping at the first valid completion.
/// Results are memoized per (prefix, total length).
class BruteForcePrefixOracle : public PrefixOracle {
 public:
  explicit BruteForcePrefixOracle(const SequenceValidator& validator) : validator_(validator) {}

  const Alphabet& alphabet() const override { return validator_.alphabet(); }

  bool feasible(std::span<const TokenId> prefix, std::size_t remaining) const override {
    guard_enumeration(alphabet().size(), remaining);
    std::lock_guard<std::mutex> lock(mu_);
    Sequence work(prefix.begin(), prefix.end());
    return search(work, prefix.size() + remaining);
  }

  std::size_t validator_calls() const { return calls_; }

 private:
  const SequenceValidator& validator_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::size_t, std::unordered_map<Sequence, bool, SequenceHash>> memo_;
  mutable std::size_t calls_ = 0;

  bool search(Sequence& work, std::size_t total) const {
    if (work.size() == total) {
      ++calls_;
      return validator_.check(work).valid;
    }
    auto& table = memo_[total];
    if (auto it = table.find(work); it != table.end()) return it->second;
    bool found = false;
    for (TokenId t = 0; t < alphabet().size() && !found; ++t) {
      work.push_back(t);
      found = search(work, total);
      work.pop_back();
    }
    table.emplace(work, found);
    return found;
  }
};

/// Feasibility of every prefix of one fixed length T, computed bottom-up from
/// a full enumeration of the C^T space.
class ExhaustivePrefixTable : public PrefixOracle {
 public:
  ExhaustivePrefixTable(const SequenceValidator& validator, std::size_t T) : alphabet_(validator.alphabet()), T_(T) {
    const std::size_t c = alphabet_.size();
    guard_enumeration(c, T);
    levels_.resize(T + 1);
    std::size_t n = 1;
    for (std::size_t t = 0; t <= T; ++t) {
      levels_[t].assign(n, 0);
      n *= c;
    }
    Sequence seq(T, 0);
    auto& leaves = levels_[T];
    for (std::size_t idx = 0; idx < leaves.size(); ++idx) {
      std::size_t v = idx;
      for (std::size_t p = T; p-- > 0;) {
        seq[p] = static_cast<TokenId>(v % c);
        v /= c;
      }
      leaves[idx] = validator.check(seq).valid ? 1 : 0;
      count_ += leaves[idx];
    }
    for (std::size_t t = T; t-- > 0;) {
      for (std::size_t idx = 0; idx < levels_[t].size(); ++idx) {
        std::uint8_t any = 0;
        for (std::size_t k = 0; k < c && !any; ++k) any = levels_[t + 1][idx * c + k];
        levels_[t][idx] = any;
      }
    }
  }

  const Alphabet& alphabet() const override { return alphabet_; }
  std::size_t length() const { return T_; }
  std::uint64_t valid_count() const { return count_; }

  bool feasible(std::span<const TokenId> prefix, std::size_t remaining) const override {
    if (prefix.size() + remaining != T_)
      throw Error("prefix table built for length " + std::to_string(T_) + ", queried with length " +
                  std::to_string(prefix.size() + remaining));
    std::size_t idx = 0;
    for (TokenId t : prefix) idx = idx * alphabet_.size() + t;
    return levels_[prefix.size()][idx] != 0;
  }

  bool is_valid(std::span<const TokenId> seq) const { return feasible(seq, T_ - seq.size()); }

 private:
  Alphabet alphabet_;
  std::size_t T_;
  std::vector<std::vector<std::uint8_t>> levels_;
  std::uint64_t count_ = 0;
};

struct Enumeration {
  std::uint64_t count = 0;
  std::vector<Sequence> sequences;
};

/// Exact |X+| over all C^T sequences; optionally the valid set itself.
inline Enumeration enumerate_valid(const Alphabet& alphabet, std::size_t T, const SequenceValidator& validator,
                                   bool collect = false) {
  const std::size_t c = alphabet.size();
  guard_enumeration(c, T);
  Enumeration out;
  Sequence seq(T, 0);
  for (;;) {
    if (validator.check(seq).valid) {
      ++out.count;
      if (collect) out.sequences.push_back(seq);
    }
    std::size_t p = T;
    while (p > 0) {
      --p;
      if (++seq[p] < c) break;
      seq[p] = 0;
      if (p == 0) return out;
    }
    if (T == 0) return out;
  }
}

}  // namespace seqval

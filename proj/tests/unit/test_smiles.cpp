#include <gtest/gtest.h>

#include "seqval/dataset.hpp"
#include "seqval/rng.hpp"
#include "seqval/smiles.hpp"

using namespace seqval;

namespace {

bool valid(const char* s) { return validate_smiles(s).valid; }

bool feasible(const SmilesPrefixOracle& o, const char* prefix, std::size_t remaining) {
  return o.feasible(tokenize(prefix, o.alphabet()), remaining);
}

}  // namespace

TEST(ValidateSmiles, ValenceExamples) {
  EXPECT_TRUE(valid("CC"));
  EXPECT_FALSE(valid("C("));
  EXPECT_TRUE(valid("O=C=O"));
  EXPECT_TRUE(valid("FOF"));
  EXPECT_FALSE(valid("F=O"));
  EXPECT_FALSE(valid("CBrC"));
  EXPECT_TRUE(valid("C#N"));
  EXPECT_FALSE(valid("C#O"));
  EXPECT_TRUE(valid("FC(F)(F)F"));
  EXPECT_FALSE(valid("FC(F)(F)(F)F"));
  EXPECT_TRUE(valid("OS(=O)(=O)O"));
}

TEST(ValidateSmiles, Branches) {
  EXPECT_FALSE(valid("C()C"));
  EXPECT_FALSE(valid("C(=)C"));
  EXPECT_FALSE(valid("(C)C"));
  EXPECT_FALSE(valid("CC)"));
  EXPECT_TRUE(valid("CC(C)(C)C"));
  EXPECT_TRUE(valid("C(C(C))C"));
  EXPECT_TRUE(valid("C(=O)O"));
  EXPECT_TRUE(valid("CC(C)=O"));
  EXPECT_FALSE(valid("C=(C)C"));
}

TEST(ValidateSmiles, Bonds) {
  EXPECT_FALSE(valid("=C"));
  EXPECT_FALSE(valid("C="));
  EXPECT_FALSE(valid("C==C"));
  EXPECT_TRUE(valid("C-C"));
  EXPECT_TRUE(valid("F/C=C/F"));
  EXPECT_TRUE(valid("F\\C=C\\F"));
}

TEST(ValidateSmiles, RingBonds) {
  EXPECT_TRUE(valid("C1CCCCC1"));
  EXPECT_TRUE(valid("C1=CC=CC=C1"));
  EXPECT_FALSE(valid("C1CC"));
  EXPECT_FALSE(valid("C11"));
  EXPECT_FALSE(valid("C1C1"));
  EXPECT_FALSE(valid("C12CC12"));
  EXPECT_TRUE(valid("C=1CCC1"));
  EXPECT_TRUE(valid("C1CCC=1"));
  EXPECT_TRUE(valid("C=1CCC=1"));
  EXPECT_FALSE(valid("C=1CCC#1"));
  EXPECT_FALSE(valid("C(C)1CC1"));
  EXPECT_TRUE(valid("C1CC1C1CC1"));
  EXPECT_FALSE(valid("1CC1"));
  EXPECT_FALSE(valid("F1CC1"));
}

TEST(ValidateSmiles, BracketAtoms) {
  EXPECT_TRUE(valid("[NH4+]"));
  EXPECT_FALSE(valid("[NH5+]"));
  EXPECT_TRUE(valid("C[N+](C)(C)C"));
  EXPECT_FALSE(valid("CN(C)(C)C"));
  EXPECT_TRUE(valid("C[O-]"));
  EXPECT_FALSE(valid("C[O-]C"));
  EXPECT_TRUE(valid("[BH4-]"));
  EXPECT_TRUE(valid("N[C@@H](C)C(=O)O"));
  EXPECT_TRUE(valid("C[C@H](F)Cl"));
  EXPECT_FALSE(valid("[C@@@H]"));
  EXPECT_FALSE(valid("[]"));
  EXPECT_FALSE(valid("[H+2]C"));
  EXPECT_TRUE(valid("[H]"));
  EXPECT_TRUE(valid("[N++]"));
  EXPECT_TRUE(valid("[N+2]"));
  EXPECT_FALSE(valid("[N++2]"));
  EXPECT_FALSE(valid("[C2]"));
  EXPECT_FALSE(valid("C]"));
}

TEST(ValidateSmiles, SymbolsOnlyInsideBrackets) {
  EXPECT_FALSE(valid("H"));
  EXPECT_FALSE(valid("CH"));
  EXPECT_FALSE(valid("C@C"));
  EXPECT_FALSE(valid("C+"));
  EXPECT_FALSE(valid(""));
  EXPECT_FALSE(valid("c1ccccc1"));
}

TEST(ValidateSmiles, BundledCorpusIsValid) {
  auto corpus = read_lines(SEQVAL_CORPUS);
  ASSERT_GE(corpus.size(), 1000u);
  Alphabet a = smiles_alphabet(false);
  for (const auto& s : corpus) {
    EXPECT_TRUE(valid(s.c_str())) << s;
    EXPECT_LE(tokenize(s, a).size(), 40u) << s;
  }
}

TEST(SmilesPrefix, BranchExamples) {
  SmilesPrefixOracle o;
  EXPECT_TRUE(feasible(o, "C(", 2));
  EXPECT_FALSE(feasible(o, "C(", 1));
  for (std::size_t r = 0; r < 30; ++r) EXPECT_FALSE(feasible(o, "C)", r));
}

TEST(SmilesPrefix, ValenceAfterDoubleBondedOxygen) {
  SmilesPrefixOracle o;
  EXPECT_FALSE(feasible(o, "CC(=OC", 30));
  EXPECT_FALSE(feasible(o, "CC(=OF", 30));
  EXPECT_TRUE(feasible(o, "CC(=O)", 30));
  EXPECT_FALSE(feasible(o, "CBrC", 30));
  EXPECT_TRUE(feasible(o, "CBr", 30));
}

TEST(SmilesPrefix, BracketAndBranchOrder) {
  SmilesPrefixOracle o;
  EXPECT_FALSE(feasible(o, "C()", 30));
  EXPECT_FALSE(feasible(o, "C[]", 30));
  EXPECT_TRUE(feasible(o, "C[N", 30));
}

TEST(SmilesPrefix, PadOnlyAsSuffix) {
  SmilesPrefixOracle o;
  EXPECT_TRUE(feasible(o, "CC__", 3));
  EXPECT_FALSE(feasible(o, "C(__", 3));
  EXPECT_FALSE(feasible(o, "C_C", 3));
  EXPECT_FALSE(feasible(o, "_", 5));
}

TEST(SmilesPrefix, ShortestCompletionLengths) {
  SmilesPrefixOracle o;
  const Alphabet& a = o.alphabet();
  auto shortest = [&](const char* p) { return o.shortest_completion(o.automaton().run(tokenize(p, a)), 50); };
  EXPECT_EQ(shortest("CC"), 0u);
  EXPECT_EQ(shortest("C("), 2u);
  EXPECT_EQ(shortest("C1"), 3u);
  EXPECT_EQ(shortest("C12"), 5u);
  EXPECT_EQ(shortest("C1CC(C("), 4u);
  EXPECT_EQ(shortest("C1CC(("), 51u);
  EXPECT_EQ(shortest("C["), 2u);
  EXPECT_EQ(shortest("C="), 1u);
  EXPECT_EQ(shortest("C1C="), 2u);
}

TEST(SmilesPrefix, CompleteStatesMatchValidator) {
  SmilesValidator v;
  SmilesPrefixOracle o;
  Rng rng = make_rng(11);
  const Alphabet& a = o.alphabet();
  for (auto s : read_lines(SEQVAL_CORPUS)) {
    Sequence seq = tokenize(s, a);
    EXPECT_TRUE(o.automaton().run(seq).complete()) << s;
    for (int k = 0; k < 5; ++k) {
      Sequence m = seq;
      m[uniform_index(rng, m.size())] = static_cast<TokenId>(uniform_index(rng, a.emitted_size()));
      EXPECT_EQ(o.automaton().run(m).complete(), v.check(m).valid) << detokenize(m, a);
    }
  }
}

TEST(SmilesPrefix, AgreesWithExhaustiveTablesOnMixedAlphabets) {
  const char* alphabets[] = {"COF()=1", "CF()12", "C[]+-NH", "S=#12()", "BN@[]-1"};
  for (const char* chars : alphabets) {
    for (bool pad : {false, true}) {
      Alphabet a = Alphabet::from_chars(chars, pad ? std::optional<std::string>("_") : std::nullopt);
      SmilesValidator v(a);
      SmilesPrefixOracle o(a);
      for (std::size_t L = 0; L <= 5; ++L) {
        ExhaustivePrefixTable table(v, L);
        for (std::size_t t = 0; t <= L; ++t) {
          Sequence p(t, 0);
          std::size_t n = static_cast<std::size_t>(space_size(a.size(), t));
          for (std::size_t idx = 0; idx < n; ++idx) {
            std::size_t x = idx;
            for (std::size_t i = t; i-- > 0;) {
              p[i] = static_cast<TokenId>(x % a.size());
              x /= a.size();
            }
            ASSERT_EQ(o.feasible(p, L - t), table.feasible(p, L - t))
                << chars << (pad ? " +PAD" : "") << " '" << detokenize(p, a) << "' r=" << L - t;
          }
        }
      }
    }
  }
}

TEST(SmilesPrefix, ShortestSearchAgreesWithExhaustiveSearch) {
  Alphabet a = smiles_alphabet();
  SmilesPrefixOracle fast(a), slow(a, SmilesPrefixOracle::Search::Exhaustive);
  Rng rng = make_rng(5);
  for (int trial = 0; trial < 150; ++trial) {
    Sequence p;
    std::size_t len = uniform_index(rng, 25);
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<TokenId> ok;
      for (TokenId t = 0; t < a.size(); ++t) {
        p.push_back(t);
        if (fast.feasible(p, 40)) ok.push_back(t);
        p.pop_back();
      }
      if (ok.empty()) break;
      p.push_back(ok[uniform_index(rng, ok.size())]);
    }
    for (std::size_t r = 0; r <= 5; ++r)
      ASSERT_EQ(fast.feasible(p, r), slow.feasible(p, r)) << "'" << detokenize(p, a) << "' r=" << r;
  }
}

TEST(SmilesPrefix, MonotoneAlongRandomStrings) {
  SmilesPrefixOracle o;
  const Alphabet& a = o.alphabet();
  Rng rng = make_rng(3);
  const std::size_t T = 40;
  for (int trial = 0; trial < 2000; ++trial) {
    Sequence s(T);
    for (auto& t : s) t = static_cast<TokenId>(uniform_index(rng, a.size()));
    bool prev = true;
    for (std::size_t t = 0; t <= T; ++t) {
      bool f = o.feasible(std::span<const TokenId>(s).first(t), T - t);
      if (!prev) {
        EXPECT_FALSE(f);
      }
      prev = f;
    }
  }
}

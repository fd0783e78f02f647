#pragma once

// Kekule SMILES subset over the Table-3 symbols. Two independent routes decide
// validity: SmilesValidator parses the whole string into a molecular graph and
// checks it afterwards; SmilesAutomaton consumes one token at a time and keeps
// only the state that can still matter for the rest of the string.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqval/alphabet.hpp"
#include "seqval/prefix.hpp"
#include "seqval/verdict.hpp"

namespace seqval {

enum class Element : std::uint8_t { B, C, N, O, S, P, F, I, Cl, Br, H };

struct ValenceTable {
  /// Largest allowed number of explicit bonds (plus explicit H) for a neutral atom.
  static int neutral(Element e) {
    switch (e) {
      case Element::B: return 3;
      case Element::C: return 4;
      case Element::N: return 3;
      case Element::O: return 2;
      case Element::S: return 6;
      case Element::P: return 5;
      case Element::F:
      case Element::I:
      case Element::Cl:
      case Element::Br:
      case Element::H: return 1;
    }
    return 0;
  }

  /// Charge-adjusted capacity: cations of N-like elements and anions of boron
  /// gain |q|, every other charged atom loses |q|.
  static int capacity(Element e, int charge) {
    int base = neutral(e);
    int q = charge < 0 ? -charge : charge;
    bool gains = (charge > 0 && e != Element::B && e != Element::C && e != Element::H) ||
                 (charge < 0 && e == Element::B);
    int cap = gains ? base + q : base - q;
    return std::max(cap, 0);
  }
};

struct SmilesSymbol {
  enum Kind : std::uint8_t { Organic, Hydrogen, At, Bond, Minus, Plus, Digit, Open, Close, LBracket, RBracket, Pad, Other };
  Kind kind = Other;
  Element element = Element::C;
  int value = 0;  // bond order for Bond, digit value for Digit
};

inline SmilesSymbol classify_smiles_token(std::string_view tok) {
  using K = SmilesSymbol::Kind;
  static const std::map<std::string, Element, std::less<>> elements = {
      {"B", Element::B}, {"C", Element::C}, {"N", Element::N}, {"O", Element::O},   {"S", Element::S},
      {"P", Element::P}, {"F", Element::F}, {"I", Element::I}, {"Cl", Element::Cl}, {"Br", Element::Br}};
  if (auto it = elements.find(tok); it != elements.end()) return {K::Organic, it->second, 0};
  if (tok == "H") return {K::Hydrogen, Element::H, 0};
  if (tok.size() == 1) {
    char c = tok[0];
    if (c >= '1' && c <= '8') return {K::Digit, Element::C, c - '0'};
    switch (c) {
      case '@': return {K::At};
      case '=': return {K::Bond, Element::C, 2};
      case '#': return {K::Bond, Element::C, 3};
      case '/':
      case '\\': return {K::Bond, Element::C, 1};
      case '-': return {K::Minus, Element::C, 1};
      case '+': return {K::Plus};
      case '(': return {K::Open};
      case ')': return {K::Close};
      case '[': return {K::LBracket};
      case ']': return {K::RBracket};
      default: break;
    }
  }
  return {K::Other};
}

// ---- graph route -------------------------------------------------------------

/// Parses with a recursive-descent grammar
///   chain   := branched ( bond? branched )*
///   branched:= atom ringbond* branch*
///   ringbond:= bond? DIGIT
///   branch  := '(' bond? chain ')'
///   atom    := ORGANIC | '[' ELEMENT ('@' '@'?)? ('H' DIGIT?)? charge? ']'
///   charge  := '+' DIGIT? | '+'+ | '-' DIGIT? | '-'+
/// then checks ring pairing, duplicate bonds and valence on the built graph.
class SmilesValidator : public SequenceValidator {
 public:
  explicit SmilesValidator(Alphabet alphabet = smiles_alphabet()) : alphabet_(std::move(alphabet)) {}

  const Alphabet& alphabet() const override { return alphabet_; }

  Verdict check_text(std::string_view text) const override {
    static const Alphabet full = smiles_alphabet(false);
    Sequence toks;
    try {
      toks = tokenize(text, full);
    } catch (const UnknownSymbol& e) {
      return Verdict::fail("unknown symbol at " + std::to_string(e.position));
    }
    std::vector<SmilesSymbol> syms;
    syms.reserve(toks.size());
    for (TokenId t : toks) syms.push_back(classify_smiles_token(full.token(t)));
    Graph g;
    Reader r{syms, 0};
    if (syms.empty()) return Verdict::fail("empty string");
    if (!parse_chain(r, g, -1, 0)) return Verdict::fail("syntax error at token " + std::to_string(r.pos));
    if (r.pos != syms.size()) return Verdict::fail("syntax error at token " + std::to_string(r.pos));
    return check_graph(g);
  }

 private:
  Alphabet alphabet_;

  struct AtomRec {
    Element element;
    int charge = 0;
    int hcount = 0;
  };
  struct BondRec {
    int a, b, order;
  };
  struct RingEnd {
    int digit;
    int atom;
    int spec;  // 0 when no bond symbol preceded the digit
  };
  struct Graph {
    std::vector<AtomRec> atoms;
    std::vector<BondRec> bonds;
    std::vector<RingEnd> ring_ends;
  };
  struct Reader {
    const std::vector<SmilesSymbol>& s;
    std::size_t pos;
    bool at(SmilesSymbol::Kind k) const { return pos < s.size() && s[pos].kind == k; }
    bool at_bond() const { return at(SmilesSymbol::Bond) || at(SmilesSymbol::Minus); }
  };

  static bool parse_chain(Reader& r, Graph& g, int anchor, int bond) {
    int prev = anchor;
    for (;;) {
      int atom = parse_atom(r, g);
      if (atom < 0) return false;
      if (prev >= 0) g.bonds.push_back({prev, atom, bond == 0 ? 1 : bond});
      while (r.at(SmilesSymbol::Digit) ||
             (r.at_bond() && r.pos + 1 < r.s.size() && r.s[r.pos + 1].kind == SmilesSymbol::Digit)) {
        int spec = 0;
        if (r.at_bond()) spec = r.s[r.pos++].value;
        g.ring_ends.push_back({r.s[r.pos++].value, atom, spec});
      }
      while (r.at(SmilesSymbol::Open)) {
        ++r.pos;
        int b = 0;
        if (r.at_bond()) b = r.s[r.pos++].value;
        if (!parse_chain(r, g, atom, b)) return false;
        if (!r.at(SmilesSymbol::Close)) return false;
        ++r.pos;
      }
      prev = atom;
      bond = 0;
      if (r.at_bond()) bond = r.s[r.pos++].value;
      else if (!r.at(SmilesSymbol::Organic) && !r.at(SmilesSymbol::LBracket)) return true;
    }
  }

  static int parse_atom(Reader& r, Graph& g) {
    using K = SmilesSymbol::Kind;
    if (r.at(K::Organic)) {
      g.atoms.push_back({r.s[r.pos++].element});
      return static_cast<int>(g.atoms.size() - 1);
    }
    if (!r.at(K::LBracket)) return -1;
    ++r.pos;
    AtomRec a{};
    if (r.at(K::Organic) || r.at(K::Hydrogen)) a.element = r.s[r.pos++].element;
    else return -1;
    if (r.at(K::At)) {
      ++r.pos;
      if (r.at(K::At)) ++r.pos;
    }
    if (r.at(K::Hydrogen)) {
      ++r.pos;
      a.hcount = 1;
      if (r.at(K::Digit)) a.hcount = r.s[r.pos++].value;
    }
    if (r.at(K::Plus) || r.at(K::Minus)) {
      K sign = r.s[r.pos].kind;
      int dir = sign == K::Plus ? 1 : -1;
      ++r.pos;
      if (r.at(K::Digit)) {
        a.charge = dir * r.s[r.pos++].value;
      } else {
        int n = 1;
        while (r.at(sign)) {
          ++r.pos;
          ++n;
        }
        a.charge = dir * n;
      }
    }
    if (!r.at(K::RBracket)) return -1;
    ++r.pos;
    g.atoms.push_back(a);
    return static_cast<int>(g.atoms.size() - 1);
  }

  static Verdict check_graph(Graph& g) {
    std::vector<BondRec> bonds = g.bonds;
    std::array<std::optional<RingEnd>, 9> pending{};
    for (const RingEnd& e : g.ring_ends) {
      auto& slot = pending[static_cast<std::size_t>(e.digit)];
      if (!slot) {
        slot = e;
        continue;
      }
      const RingEnd& o = *slot;
      if (o.atom == e.atom) return Verdict::fail("ring bond " + std::to_string(e.digit) + " closes on its own atom");
      if (o.spec != 0 && e.spec != 0 && o.spec != e.spec)
        return Verdict::fail("ring bond " + std::to_string(e.digit) + " has conflicting bond orders");
      int order = o.spec != 0 ? o.spec : (e.spec != 0 ? e.spec : 1);
      bonds.push_back({o.atom, e.atom, order});
      slot.reset();
    }
    for (std::size_t d = 0; d < pending.size(); ++d)
      if (pending[d]) return Verdict::fail("ring bond " + std::to_string(d) + " left open");
    std::set<std::pair<int, int>> seen;
    std::vector<int> used(g.atoms.size(), 0);
    for (const BondRec& b : bonds) {
      auto key = std::minmax(b.a, b.b);
      if (!seen.insert(key).second) return Verdict::fail("duplicate bond between atoms " + std::to_string(key.first) +
                                                         " and " + std::to_string(key.second));
      used[static_cast<std::size_t>(b.a)] += b.order;
      used[static_cast<std::size_t>(b.b)] += b.order;
    }
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
      const AtomRec& a = g.atoms[i];
      if (used[i] + a.hcount > ValenceTable::capacity(a.element, a.charge))
        return Verdict::fail("valence exceeded on atom " + std::to_string(i));
    }
    return Verdict::pass();
  }
};

inline Verdict validate_smiles(std::string_view text) {
  static const SmilesValidator v;
  return v.check_text(text);
}

// ---- incremental route ----------------------------------------------------------

/// Parse state after a prefix. Atoms that can no longer receive bonds are
/// forgotten; the remaining ones are renumbered in a fixed order so that two
/// prefixes with the same future behaviour have equal states.
struct SmilesState {
  enum class Phase : std::uint8_t { Start, Atom, Ring, Open, Close, BondRing, BondChain, Bracket, Padded, Dead };
  enum class BPhase : std::uint8_t { Element, AfterElement, AfterAt, AfterAtAt, AfterH, AfterHCount, AfterSign, AfterChargeDigit };

  Phase phase = Phase::Start;
  BPhase bphase = BPhase::Element;
  bool has_atom = false;
  std::uint8_t pending = 0;  // bond order awaiting an atom or ring digit
  std::uint8_t bonded = 0;   // bit d-1: opener of ring d is already bonded to cur
  std::int8_t cur = -1;
  std::array<std::int8_t, 8> ring_opener{-1, -1, -1, -1, -1, -1, -1, -1};
  std::array<std::uint8_t, 8> ring_spec{};
  std::vector<std::int8_t> stack;
  std::vector<int> rem;  // remaining capacity per tracked atom

  // bracket atom under construction
  Element b_element = Element::C;
  std::int8_t b_sign = 0;
  int b_charge = 0;
  int b_hcount = 0;
  std::uint8_t b_order = 0;  // bond to cur, 0 for the first atom

  bool dead() const { return phase == Phase::Dead; }

  int open_rings() const {
    int n = 0;
    for (auto o : ring_opener) n += o >= 0;
    return n;
  }

  bool complete() const {
    if (phase == Phase::Padded) return true;
    return (phase == Phase::Atom || phase == Phase::Ring || phase == Phase::Close) && stack.empty() &&
           open_rings() == 0 && has_atom;
  }

  std::string key() const {
    std::string k;
    k.reserve(40 + stack.size() + rem.size());
    k.push_back(static_cast<char>(phase));
    k.push_back(static_cast<char>(bphase));
    k.push_back(static_cast<char>(has_atom));
    k.push_back(static_cast<char>(pending));
    k.push_back(static_cast<char>(bonded));
    k.push_back(static_cast<char>(cur));
    for (int i = 0; i < 8; ++i) {
      k.push_back(static_cast<char>(ring_opener[i]));
      k.push_back(static_cast<char>(ring_spec[i]));
    }
    k.push_back(static_cast<char>(b_element));
    k.push_back(static_cast<char>(b_sign));
    k.push_back(static_cast<char>(b_charge));
    k.push_back(static_cast<char>(b_hcount));
    k.push_back(static_cast<char>(b_order));
    k.push_back('|');
    for (auto s : stack) k.push_back(static_cast<char>(s));
    k.push_back('|');
    for (int r : rem) k.push_back(static_cast<char>(r));
    return k;
  }
};

/// Token-at-a-time transition function for the SMILES subset.
class SmilesAutomaton {
 public:
  using State = SmilesState;
  using Phase = SmilesState::Phase;
  using BPhase = SmilesState::BPhase;

  explicit SmilesAutomaton(const Alphabet& alphabet) {
    symbols_.reserve(alphabet.size());
    for (TokenId t = 0; t < alphabet.size(); ++t)
      symbols_.push_back(alphabet.is_pad(t) ? SmilesSymbol{SmilesSymbol::Pad} : classify_smiles_token(alphabet.token(t)));
  }

  const SmilesSymbol& symbol(TokenId t) const { return symbols_.at(t); }

  State run(std::span<const TokenId> prefix) const {
    State s;
    for (TokenId t : prefix) {
      step(s, t);
      if (s.dead()) break;
    }
    return s;
  }

  void step(State& s, TokenId t) const { step_symbol(s, symbols_.at(t)); }

  static void step_symbol(State& s, const SmilesSymbol& sym) {
    using K = SmilesSymbol::Kind;
    if (s.phase == Phase::Dead) return;
    if (sym.kind == K::Pad) {
      if (s.phase != Phase::Padded) s.phase = s.complete() ? Phase::Padded : Phase::Dead;
      return;
    }
    if (s.phase == Phase::Padded) return kill(s);
    if (s.phase == Phase::Bracket) return bracket_step(s, sym);

    switch (sym.kind) {
      case K::Organic:
        return attach_atom(s, ValenceTable::neutral(sym.element), 0);
      case K::LBracket: {
        std::uint8_t order = 0;
        if (s.has_atom) {
          order = s.pending ? s.pending : 1;
          if (s.phase == Phase::Start || !use(s, s.cur, order)) return kill(s);
        }
        s.b_order = order;
        s.b_sign = 0;
        s.b_charge = 0;
        s.b_hcount = 0;
        s.b_element = Element::C;
        s.pending = 0;
        s.phase = Phase::Bracket;
        s.bphase = BPhase::Element;
        return;
      }
      case K::Bond:
      case K::Minus: {
        auto order = static_cast<std::uint8_t>(sym.value);
        if (s.phase == Phase::Atom || s.phase == Phase::Ring) s.phase = Phase::BondRing;
        else if (s.phase == Phase::Open || s.phase == Phase::Close) s.phase = Phase::BondChain;
        else return kill(s);
        if (s.rem[static_cast<std::size_t>(s.cur)] < order) return kill(s);
        s.pending = order;
        return;
      }
      case K::Open:
        if (s.phase != Phase::Atom && s.phase != Phase::Ring && s.phase != Phase::Close) return kill(s);
        s.stack.push_back(s.cur);
        s.phase = Phase::Open;
        return;
      case K::Close:
        if ((s.phase != Phase::Atom && s.phase != Phase::Ring && s.phase != Phase::Close) || s.stack.empty())
          return kill(s);
        s.cur = s.stack.back();
        s.stack.pop_back();
        s.phase = Phase::Close;
        s.bonded = 0;
        return canonicalize(s);
      case K::Digit:
        return ring_digit(s, sym.value);
      default:
        return kill(s);
    }
  }

 private:
  std::vector<SmilesSymbol> symbols_;

  static void kill(State& s) { s.phase = Phase::Dead; }

  static bool use(State& s, int atom, int amount) {
    int& r = s.rem[static_cast<std::size_t>(atom)];
    if (r < amount) return false;
    r -= amount;
    return true;
  }

  // New atom with `cap` capacity and `hydrogens` explicit H, bonded to cur
  // unless it is the first atom. For bracket atoms the bond to cur was already
  // charged to cur when '[' was read.
  static void attach_atom(State& s, int cap, int hydrogens, bool from_bracket = false) {
    int order = 0;
    if (s.has_atom) {
      if (from_bracket) {
        order = s.b_order;
      } else {
        if (s.phase == Phase::Start) return kill(s);
        order = s.pending ? s.pending : 1;
        if (!use(s, s.cur, order)) return kill(s);
      }
    }
    int left = cap - order - hydrogens;
    if (left < 0) return kill(s);
    std::uint8_t mask = 0;
    for (int d = 0; d < 8; ++d)
      if (s.has_atom && s.ring_opener[d] == s.cur) mask |= static_cast<std::uint8_t>(1u << d);
    s.rem.push_back(left);
    s.cur = static_cast<std::int8_t>(s.rem.size() - 1);
    s.bonded = mask;
    s.has_atom = true;
    s.pending = 0;
    s.phase = Phase::Atom;
    canonicalize(s);
  }

  static void ring_digit(State& s, int digit) {
    if (s.phase != Phase::Atom && s.phase != Phase::Ring && s.phase != Phase::BondRing) return kill(s);
    auto d = static_cast<std::size_t>(digit - 1);
    int spec = s.pending;
    if (s.ring_opener[d] < 0) {
      if (!use(s, s.cur, spec ? spec : 1)) return kill(s);
      s.ring_opener[d] = s.cur;
      s.ring_spec[d] = static_cast<std::uint8_t>(spec);
    } else {
      int opener = s.ring_opener[d];
      if (opener == s.cur || (s.bonded >> d) & 1u) return kill(s);
      int ospec = s.ring_spec[d];
      if (ospec && spec && ospec != spec) return kill(s);
      int order = ospec ? ospec : (spec ? spec : 1);
      if (!use(s, s.cur, order)) return kill(s);
      if (!use(s, opener, order - (ospec ? ospec : 1))) return kill(s);
      s.ring_opener[d] = -1;
      s.ring_spec[d] = 0;
      for (int e = 0; e < 8; ++e)
        if (s.ring_opener[e] == opener) s.bonded |= static_cast<std::uint8_t>(1u << e);
      s.bonded &= static_cast<std::uint8_t>(~(1u << d));
    }
    s.pending = 0;
    s.phase = Phase::Ring;
    canonicalize(s);
  }

  static void bracket_step(State& s, const SmilesSymbol& sym) {
    using K = SmilesSymbol::Kind;
    switch (s.bphase) {
      case BPhase::Element:
        if (sym.kind != K::Organic && sym.kind != K::Hydrogen) return kill(s);
        s.b_element = sym.element;
        s.bphase = BPhase::AfterElement;
        return;
      case BPhase::AfterElement:
      case BPhase::AfterAt:
      case BPhase::AfterAtAt:
        if (sym.kind == K::At) {
          if (s.bphase == BPhase::AfterAtAt) return kill(s);
          s.bphase = s.bphase == BPhase::AfterElement ? BPhase::AfterAt : BPhase::AfterAtAt;
          return;
        }
        if (sym.kind == K::Hydrogen) {
          s.b_hcount = 1;
          s.bphase = BPhase::AfterH;
          return;
        }
        return charge_or_close(s, sym);
      case BPhase::AfterH:
        if (sym.kind == K::Digit) {
          s.b_hcount = sym.value;
          s.bphase = BPhase::AfterHCount;
          return;
        }
        return charge_or_close(s, sym);
      case BPhase::AfterHCount:
        return charge_or_close(s, sym);
      case BPhase::AfterSign:
        if ((sym.kind == K::Plus && s.b_sign > 0) || (sym.kind == K::Minus && s.b_sign < 0)) {
          s.b_charge += s.b_sign;
          return;
        }
        if (sym.kind == K::Digit && (s.b_charge == 1 || s.b_charge == -1)) {
          s.b_charge = s.b_sign * sym.value;
          s.bphase = BPhase::AfterChargeDigit;
          return;
        }
        if (sym.kind == K::RBracket) return close_bracket(s);
        return kill(s);
      case BPhase::AfterChargeDigit:
        if (sym.kind == K::RBracket) return close_bracket(s);
        return kill(s);
    }
  }

  static void charge_or_close(State& s, const SmilesSymbol& sym) {
    using K = SmilesSymbol::Kind;
    if (sym.kind == K::Plus || sym.kind == K::Minus) {
      s.b_sign = sym.kind == K::Plus ? 1 : -1;
      s.b_charge = s.b_sign;
      s.bphase = BPhase::AfterSign;
      return;
    }
    if (sym.kind == K::RBracket) return close_bracket(s);
    kill(s);
  }

  static void close_bracket(State& s) {
    int cap = ValenceTable::capacity(s.b_element, s.b_charge);
    int hydrogens = s.b_hcount;
    s.b_sign = 0;
    s.b_charge = 0;
    s.b_hcount = 0;
    s.b_element = Element::C;
    s.bphase = BPhase::Element;
    s.phase = Phase::Atom;
    attach_atom(s, cap, hydrogens, true);
    s.b_order = 0;
  }

  // Drops atoms nobody can bond to any more and renumbers the rest in the
  // order cur, stack bottom to top, ring openers by digit.
  static void canonicalize(State& s) {
    std::array<std::int8_t, 128> map;
    map.fill(-1);
    std::vector<int> rem;
    rem.reserve(s.rem.size());
    auto keep = [&](std::int8_t a) -> std::int8_t {
      if (a < 0) return a;
      auto& m = map[static_cast<std::size_t>(a)];
      if (m < 0) {
        m = static_cast<std::int8_t>(rem.size());
        rem.push_back(s.rem[static_cast<std::size_t>(a)]);
      }
      return m;
    };
    s.cur = keep(s.cur);
    for (auto& a : s.stack) a = keep(a);
    for (auto& o : s.ring_opener) o = keep(o);
    s.rem = std::move(rem);
  }
};

/// Exact ṽ for the SMILES subset. With PAD in the alphabet a prefix is
/// feasible iff its shortest completion fits in the remaining length; that
/// length is found by A* over the automaton. Without PAD the completion must
/// have exactly the remaining length and a memoized search over
/// (state, remaining) decides it.
class SmilesPrefixOracle : public PrefixOracle {
 public:
  enum class Search { Auto, Exhaustive };

  explicit SmilesPrefixOracle(Alphabet alphabet = smiles_alphabet(), Search search = Search::Auto)
      : alphabet_(std::move(alphabet)), automaton_(alphabet_) {
    int best = -1;
    for (TokenId t = 0; t < alphabet_.size(); ++t) {
      const SmilesSymbol& s = automaton_.symbol(t);
      using K = SmilesSymbol::Kind;
      switch (s.kind) {
        case K::Organic:
          if (ValenceTable::neutral(s.element) > best) {
            best = ValenceTable::neutral(s.element);
            best_atom_ = t;
          }
          break;
        case K::Digit: digit_token_[static_cast<std::size_t>(s.value - 1)] = static_cast<int>(t); break;
        case K::Close: close_token_ = static_cast<int>(t); break;
        case K::LBracket:
        case K::RBracket:
        case K::Hydrogen:
        case K::Plus:
        case K::Minus:
        case K::Bond:
        case K::At:
        case K::Open:
        case K::Pad:
        case K::Other: break;
      }
    }
    use_shortest_ = alphabet_.has_pad() && search == Search::Auto;
  }

  const Alphabet& alphabet() const override { return alphabet_; }
  const SmilesAutomaton& automaton() const { return automaton_; }

  bool feasible(std::span<const TokenId> prefix, std::size_t remaining) const override {
    return feasible_from(automaton_.run(prefix), remaining);
  }

  bool feasible_from(const SmilesState& s, std::size_t remaining) const {
    if (s.dead()) return false;
    if (use_shortest_) {
      if (s.phase == SmilesState::Phase::Padded) return true;
      return shortest_completion(s, remaining) <= remaining;
    }
    std::lock_guard<std::mutex> lock(mu_);
    return exact(s, remaining);
  }

  /// Length of the shortest completion, or `limit + 1` if it exceeds `limit`.
  std::size_t shortest_completion(const SmilesState& s, std::size_t limit) const {
    if (s.dead()) return limit + 1;
    if (s.complete()) return 0;
    std::string k = s.key();
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = shortest_.find(k); it != shortest_.end()) {
        if (it->second.exact || it->second.value > limit) return std::min(it->second.value, limit + 1);
      }
    }
    std::size_t v = astar(s, limit);
    std::lock_guard<std::mutex> lock(mu_);
    shortest_[k] = {v <= limit ? v : limit + 1, v <= limit};
    return v;
  }

 private:
  Alphabet alphabet_;
  SmilesAutomaton automaton_;
  bool use_shortest_ = false;
  int best_atom_ = -1;
  int close_token_ = -1;
  std::array<int, 8> digit_token_{-1, -1, -1, -1, -1, -1, -1, -1};

  struct Bound {
    std::size_t value;
    bool exact;
  };
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, Bound> shortest_;
  mutable std::unordered_map<std::string, bool> exact_memo_;

  // Lower bound on tokens still needed.
  static std::size_t heuristic(const SmilesState& s) {
    using P = SmilesState::Phase;
    std::size_t h = static_cast<std::size_t>(s.open_rings()) + s.stack.size();
    if (s.phase == P::Bracket) return h + (s.bphase == SmilesState::BPhase::Element ? 2 : 1);
    if (!s.has_atom || s.phase == P::Open || s.phase == P::BondChain) return h + 1;
    if (s.phase == P::BondRing && s.open_rings() == 0) return h + 1;
    return h;
  }

  // Tokens worth trying when looking for the shortest completion: ring digits
  // that close an open ring, ')', the highest-capacity organic atom, and the
  // bracket tokens needed to build a charged high-capacity atom.
  std::vector<TokenId> moves(const SmilesState& s) const {
    std::vector<TokenId> out;
    using P = SmilesState::Phase;
    if (s.phase == P::Bracket) {
      for (TokenId t = 0; t < alphabet_.size(); ++t) {
        auto k = automaton_.symbol(t).kind;
        using K = SmilesSymbol::Kind;
        if (k == K::Organic || k == K::Hydrogen || k == K::Plus || k == K::Minus || k == K::Digit || k == K::RBracket)
          out.push_back(t);
      }
      return out;
    }
    for (int d = 0; d < 8; ++d)
      if (s.ring_opener[static_cast<std::size_t>(d)] >= 0 && digit_token_[static_cast<std::size_t>(d)] >= 0)
        out.push_back(static_cast<TokenId>(digit_token_[static_cast<std::size_t>(d)]));
    if (close_token_ >= 0 && !s.stack.empty()) out.push_back(static_cast<TokenId>(close_token_));
    if (best_atom_ >= 0) out.push_back(static_cast<TokenId>(best_atom_));
    for (TokenId t = 0; t < alphabet_.size(); ++t)
      if (automaton_.symbol(t).kind == SmilesSymbol::LBracket) out.push_back(t);
    return out;
  }

  std::size_t astar(const SmilesState& start, std::size_t limit) const {
    struct Item {
      std::size_t f, g, idx;
      bool operator>(const Item& o) const { return f != o.f ? f > o.f : g < o.g; }
    };
    std::vector<SmilesState> states{start};
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> open;
    std::unordered_map<std::string, std::size_t> best_g;
    best_g[start.key()] = 0;
    open.push({heuristic(start), 0, 0});
    while (!open.empty()) {
      Item it = open.top();
      open.pop();
      const SmilesState cur = states[it.idx];
      if (cur.complete()) return it.g;
      for (TokenId t : moves(cur)) {
        SmilesState next = cur;
        automaton_.step(next, t);
        if (next.dead()) continue;
        std::size_t g = it.g + 1;
        std::size_t f = g + heuristic(next);
        if (f > limit) continue;
        std::string k = next.key();
        auto [pos, inserted] = best_g.try_emplace(k, g);
        if (!inserted) {
          if (pos->second <= g) continue;
          pos->second = g;
        }
        states.push_back(std::move(next));
        open.push({f, g, states.size() - 1});
      }
    }
    return limit + 1;
  }

  bool exact(const SmilesState& s, std::size_t r) const {
    if (s.dead()) return false;
    if (r == 0) return s.complete();
    std::string k = s.key();
    k.push_back(static_cast<char>(r & 0xFF));
    k.push_back(static_cast<char>(r >> 8));
    if (auto it = exact_memo_.find(k); it != exact_memo_.end()) return it->second;
    bool found = false;
    for (TokenId t = 0; t < alphabet_.size() && !found; ++t) {
      SmilesState next = s;
      automaton_.step(next, t);
      found = exact(next, r - 1);
    }
    exact_memo_.emplace(std::move(k), found);
    return found;
  }
};

inline bool smiles_prefix_feasible(std::span<const TokenId> prefix, std::size_t remaining,
                                   const SmilesPrefixOracle& oracle) {
  return oracle.feasible(prefix, remaining);
}

}  // namespace seqval

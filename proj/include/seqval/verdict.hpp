#pragma once

#include <span>
#include <string>
#include <utility>

#include "seqval/alphabet.hpp"

namespace seqval {

/// Outcome of a validity check. `reason` is diagnostic only and takes no part
/// in equality.
struct Verdict {
  bool valid = false;
  std::string reason;

  static Verdict pass() { return {true, {}}; }
  static Verdict fail(std::string why) { return {false, std::move(why)}; }

  explicit operator bool() const { return valid; }
  friend bool operator==(const Verdict& a, const Verdict& b) { return a.valid == b.valid; }
};

/// Complete-sequence validator v over token sequences. A trailing run of PAD
/// is stripped before checking; PAD anywhere else makes the sequence invalid.
class SequenceValidator {
 public:
  virtual ~SequenceValidator() = default;
  virtual const Alphabet& alphabet() const = 0;
  virtual Verdict check_text(std::string_view text) const = 0;

  Verdict check(std::span<const TokenId> seq) const {
    const Alphabet& a = alphabet();
    if (!pad_is_suffix(seq, a)) return Verdict::fail("PAD before end of sequence");
    return check_text(detokenize(strip_pad(seq, a), a));
  }
};

}  // namespace seqval

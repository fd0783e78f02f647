#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "seqval/alphabet.hpp"
#include "seqval/error.hpp"

namespace seqval {

struct LabeledExample {
  Sequence sequence;
  int label = 0;  // 1 valid, 0 invalid

  bool operator==(const LabeledExample&) const = default;
};

/// Labeled sequences of one common length over one alphabet.
struct Dataset {
  std::vector<LabeledExample> examples;
  std::string alphabet_id;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  std::size_t seq_len() const { return examples.empty() ? 0 : examples.front().sequence.size(); }

  double valid_fraction() const {
    if (examples.empty()) return 0.0;
    std::size_t v = 0;
    for (const auto& e : examples) v += e.label == 1;
    return static_cast<double>(v) / static_cast<double>(examples.size());
  }

  void add(LabeledExample ex) {
    if (ex.label != 0 && ex.label != 1) throw Error("label must be 0 or 1");
    if (!examples.empty() && ex.sequence.size() != seq_len())
      throw Error("sequence length " + std::to_string(ex.sequence.size()) + " differs from dataset length " +
                  std::to_string(seq_len()));
    examples.push_back(std::move(ex));
  }

  void append(const Dataset& other) {
    for (const auto& e : other.examples) add(e);
  }
};

/// `label<TAB>text` per line; `#` starts a comment line.
inline Dataset read_dataset(std::istream& in, const Alphabet& alphabet) {
  Dataset ds;
  ds.alphabet_id = alphabet.fingerprint();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected label<TAB>sequence", lineno);
    std::string label = line.substr(0, tab);
    if (label != "0" && label != "1") throw ParseError("label must be 0 or 1, got '" + label + "'", lineno);
    LabeledExample ex;
    ex.label = label == "1" ? 1 : 0;
    try {
      ex.sequence = tokenize(std::string_view(line).substr(tab + 1), alphabet);
    } catch (const UnknownSymbol& e) {
      throw ParseError("unknown symbol at column " + std::to_string(tab + 2 + e.position), lineno);
    }
    if (!ds.examples.empty() && ex.sequence.size() != ds.seq_len())
      throw ParseError("sequence length " + std::to_string(ex.sequence.size()) + " differs from " +
                           std::to_string(ds.seq_len()),
                       lineno);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

inline void write_dataset(std::ostream& out, const Dataset& ds, const Alphabet& alphabet) {
  for (const auto& e : ds.examples) out << e.label << '\t' << detokenize(e.sequence, alphabet) << '\n';
}

inline Dataset load_dataset(const std::string& path, const Alphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return read_dataset(in, alphabet);
}

inline void save_dataset(const std::string& path, const Dataset& ds, const Alphabet& alphabet) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset '" + path + "'");
  write_dataset(out, ds, alphabet);
}

/// Plain list of strings, one per line, `#` comments; used for valid corpora.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

}  // namespace seqval

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "seqval/alphabet.hpp"
#include "seqval/error.hpp"
#include "seqval/lstm.hpp"

namespace seqval {

inline constexpr char kCheckpointMagic[4] = {'S', 'V', 'Q', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A trained model together with the alphabet it was trained on.
struct Checkpoint {
  LstmModel<float> model;
  Alphabet alphabet;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> buf) : buf_(std::move(buf)) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * k);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t max_len = 1 << 16) {
    std::size_t at = pos_;
    std::uint32_t n = u32();
    if (n > max_len) throw CorruptFile("string length " + std::to_string(n) + " is implausible", at);
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void expect(const char* p, std::size_t n, const std::string& what) {
    std::size_t at = pos_;
    need(n);
    if (std::memcmp(buf_.data() + pos_, p, n) != 0) throw CorruptFile(what, at);
    pos_ += n;
  }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;

  void need(std::size_t n) {
    if (buf_.size() - pos_ < n) throw CorruptFile("unexpected end of file", buf_.size());
  }
};

}  // namespace detail

/// Layout (little-endian): magic "SVQM", u32 version, model config
/// (u64 embedding, u64 hidden, u64 layers, f64 input dropout, f64 hidden dropout,
/// u64 alphabet size, u64 sequence length), alphabet (u32 count, strings,
/// u8 has-pad, u32 pad index), u32 tensor count, then per tensor: string name,
/// u32 rank, u64 dims, row-major f32 values.
inline std::vector<char> encode_checkpoint(const LstmModel<float>& model, const Alphabet& alphabet) {
  if (alphabet.size() != model.alphabet_size()) throw Error("alphabet size does not match the model");
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  const auto& c = model.config();
  w.u64(c.embedding_dim);
  w.u64(c.hidden_dim);
  w.u64(c.layers);
  w.f64(c.input_dropout);
  w.f64(c.hidden_dropout);
  w.u64(c.alphabet_size);
  w.u64(c.seq_len);
  w.u32(static_cast<std::uint32_t>(alphabet.size()));
  for (const auto& t : alphabet.tokens()) w.str(t);
  w.u8(alphabet.has_pad() ? 1 : 0);
  w.u32(alphabet.has_pad() ? *alphabet.pad_index() : 0);
  w.u32(static_cast<std::uint32_t>(model.tensors().size()));
  for (const auto& t : model.tensors()) {
    w.str(t.name);
    w.u32(2);
    w.u64(t.rows);
    w.u64(t.cols);
    // Parameters are stored column-major in memory.
    for (std::size_t r = 0; r < t.rows; ++r)
      for (std::size_t col = 0; col < t.cols; ++col) w.f32(model.params()[t.offset + col * t.rows + r]);
  }
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  r.expect(kCheckpointMagic, 4, "bad magic bytes");
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw VersionMismatch(version, kCheckpointVersion);
  ModelConfig c;
  std::size_t at = r.offset();
  c.embedding_dim = r.u64();
  c.hidden_dim = r.u64();
  c.layers = r.u64();
  c.input_dropout = r.f64();
  c.hidden_dropout = r.f64();
  c.alphabet_size = r.u64();
  c.seq_len = r.u64();
  if (c.embedding_dim > (1u << 16) || c.hidden_dim > (1u << 16) || c.layers > 64 || c.alphabet_size > (1u << 16))
    throw CorruptFile("implausible model configuration", at);
  try {
    c.validate();
  } catch (const Error& e) {
    throw CorruptFile(e.what(), at);
  }
  at = r.offset();
  std::uint32_t n = r.u32();
  if (n != c.alphabet_size) throw CorruptFile("alphabet size does not match the model", at);
  std::vector<std::string> tokens;
  for (std::uint32_t k = 0; k < n; ++k) tokens.push_back(r.str());
  at = r.offset();
  bool has_pad = r.u8() != 0;
  std::uint32_t pad = r.u32();
  if (has_pad && pad >= n) throw CorruptFile("PAD index out of range", at);
  Checkpoint ck;
  try {
    ck.alphabet = has_pad ? Alphabet(tokens, tokens[pad]) : Alphabet(tokens);
  } catch (const Error& e) {
    throw CorruptFile(e.what(), at);
  }
  ck.model = LstmModel<float>(c);
  at = r.offset();
  std::uint32_t count = r.u32();
  if (count != ck.model.tensors().size()) throw CorruptFile("unexpected tensor count", at);
  for (const auto& t : ck.model.tensors()) {
    at = r.offset();
    if (r.str() != t.name) throw CorruptFile("expected tensor '" + t.name + "'", at);
    at = r.offset();
    if (r.u32() != 2 || r.u64() != t.rows || r.u64() != t.cols) throw CorruptFile("shape mismatch for '" + t.name + "'", at);
    for (std::size_t row = 0; row < t.rows; ++row)
      for (std::size_t col = 0; col < t.cols; ++col) {
        at = r.offset();
        float v = r.f32();
        if (!std::isfinite(v)) throw CorruptFile("non-finite weight in '" + t.name + "'", at);
        ck.model.params()[t.offset + col * t.rows + row] = v;
      }
  }
  if (!r.done()) throw CorruptFile("trailing bytes", r.offset());
  return ck;
}

inline void save_checkpoint(const std::string& path, const LstmModel<float>& model, const Alphabet& alphabet) {
  auto bytes = encode_checkpoint(model, alphabet);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

}  // namespace seqval

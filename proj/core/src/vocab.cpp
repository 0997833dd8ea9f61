#include "medlab/vocab.hpp"

#include <stdexcept>

namespace medlab {

bool Vocabulary::valid() const {
  if (size <= 0 || static_cast<int>(glyphs.size()) != size) return false;
  const TokenId ids[] = {mask_id, indicator_id, eos_id, pad_id};
  for (TokenId id : ids) {
    if (id < 0 || id >= size) return false;
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      if (ids[i] == ids[j]) return false;
    }
  }
  return true;
}

const std::string& Vocabulary::glyph(TokenId id) const {
  if (id < 0 || id >= size) throw std::out_of_range("token id outside vocabulary");
  return glyphs[static_cast<size_t>(id)];
}

std::string Vocabulary::render(std::span<const TokenId> tokens, bool stop_at_eos) const {
  std::string out;
  for (TokenId t : tokens) {
    if (stop_at_eos && t == eos_id) break;
    out += glyph(t);
  }
  return out;
}

Vocabulary default_vocabulary() {
  Vocabulary v;
  v.glyphs = {"<pad>", "<mask>", "<eos>", "\\block",
              "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
              "+", "-", "=", " ", ":", "N", "T", "A", "C",
              "(", ")", "*", "/", "?", ".", ",", ";", "!"};
  v.size = static_cast<int>(v.glyphs.size());
  v.pad_id = tok::kPad;
  v.mask_id = tok::kMask;
  v.eos_id = tok::kEos;
  v.indicator_id = tok::kBlock;
  return v;
}

void append_number(std::vector<TokenId>& out, long v) {
  if (v < 0) {
    out.push_back(tok::kMinus);
    v = -v;
  }
  std::string digits = std::to_string(v);
  for (char c : digits) out.push_back(digit_token(c - '0'));
}

}  // namespace medlab

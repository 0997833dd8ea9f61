#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace medlab {

using TokenId = std::int32_t;

// Small synthetic symbol set shared by every pipeline. The special ids are
// pairwise distinct and below size; every token in a Sequence must be
// below size.
struct Vocabulary {
  int size = 0;
  TokenId mask_id = -1;
  TokenId indicator_id = -1;  // block-ending indicator, rendered "\block"
  TokenId eos_id = -1;
  TokenId pad_id = -1;
  std::vector<std::string> glyphs;

  bool valid() const;
  const std::string& glyph(TokenId id) const;
  // Concatenates glyphs. Stops at the first eos when stop_at_eos is set;
  // mask and pad tokens always render as their glyphs.
  std::string render(std::span<const TokenId> tokens, bool stop_at_eos = false) const;
};

// Fixed ids of the built-in 32-symbol arithmetic vocabulary.
namespace tok {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kMask = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kBlock = 3;
inline constexpr TokenId kDigit0 = 4;  // '0'..'9' occupy 4..13
inline constexpr TokenId kPlus = 14;
inline constexpr TokenId kMinus = 15;
inline constexpr TokenId kEquals = 16;
inline constexpr TokenId kSpace = 17;
inline constexpr TokenId kColon = 18;
inline constexpr TokenId kN = 19;
inline constexpr TokenId kT = 20;
inline constexpr TokenId kA = 21;
inline constexpr TokenId kC = 22;
// 23..31 are reserved punctuation, absent from every task template.
}  // namespace tok

Vocabulary default_vocabulary();

inline TokenId digit_token(int d) { return tok::kDigit0 + d; }

// Appends the decimal rendering of v (with a leading '-' for negatives).
void append_number(std::vector<TokenId>& out, long v);

}  // namespace medlab

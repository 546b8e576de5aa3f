#include "xlit/textnorm.hpp"

#include <algorithm>
#include <array>

#include "xlit/utf8.hpp"

namespace xlit {

namespace {

struct Composition {
  char32_t base;
  char32_t mark;
  char32_t composed;
};

// Sorted by (base, mark).
constexpr std::array<Composition, 60> kCompositions = {{
    // Latin capital + acute/grave/circumflex/tilde/diaeresis
    {U'A', 0x0300, 0x00C0}, {U'A', 0x0301, 0x00C1}, {U'A', 0x0302, 0x00C2},
    {U'A', 0x0303, 0x00C3}, {U'A', 0x0308, 0x00C4},
    {U'C', 0x0327, 0x00C7},
    {U'E', 0x0300, 0x00C8}, {U'E', 0x0301, 0x00C9}, {U'E', 0x0302, 0x00CA},
    {U'E', 0x0308, 0x00CB},
    {U'I', 0x0300, 0x00CC}, {U'I', 0x0301, 0x00CD}, {U'I', 0x0302, 0x00CE},
    {U'I', 0x0308, 0x00CF},
    {U'N', 0x0303, 0x00D1},
    {U'O', 0x0300, 0x00D2}, {U'O', 0x0301, 0x00D3}, {U'O', 0x0302, 0x00D4},
    {U'O', 0x0303, 0x00D5}, {U'O', 0x0308, 0x00D6},
    {U'U', 0x0300, 0x00D9}, {U'U', 0x0301, 0x00DA}, {U'U', 0x0302, 0x00DB},
    {U'U', 0x0308, 0x00DC},
    {U'Y', 0x0301, 0x00DD},
    // Latin small
    {U'a', 0x0300, 0x00E0}, {U'a', 0x0301, 0x00E1}, {U'a', 0x0302, 0x00E2},
    {U'a', 0x0303, 0x00E3}, {U'a', 0x0308, 0x00E4},
    {U'c', 0x0327, 0x00E7},
    {U'e', 0x0300, 0x00E8}, {U'e', 0x0301, 0x00E9}, {U'e', 0x0302, 0x00EA},
    {U'e', 0x0308, 0x00EB},
    {U'i', 0x0300, 0x00EC}, {U'i', 0x0301, 0x00ED}, {U'i', 0x0302, 0x00EE},
    {U'i', 0x0308, 0x00EF},
    {U'n', 0x0303, 0x00F1},
    {U'o', 0x0300, 0x00F2}, {U'o', 0x0301, 0x00F3}, {U'o', 0x0302, 0x00F4},
    {U'o', 0x0303, 0x00F5}, {U'o', 0x0308, 0x00F6},
    {U'u', 0x0300, 0x00F9}, {U'u', 0x0301, 0x00FA}, {U'u', 0x0302, 0x00FB},
    {U'u', 0x0308, 0x00FC},
    {U'y', 0x0301, 0x00FD},
    // Greek capital + tonos/dialytika
    {0x0391, 0x0301, 0x0386}, {0x0395, 0x0301, 0x0388},
    {0x0397, 0x0301, 0x0389}, {0x0399, 0x0301, 0x038A},
    {0x0399, 0x0308, 0x03AA}, {0x039F, 0x0301, 0x038C},
    {0x03A5, 0x0301, 0x038E}, {0x03A5, 0x0308, 0x03AB},
    {0x03A9, 0x0301, 0x038F},
    // Greek small (dialytika-accent combinations compose in two steps)
    {0x03B1, 0x0301, 0x03AC},
}};

constexpr std::array<Composition, 10> kCompositionsGreekSmall = {{
    {0x03B5, 0x0301, 0x03AD}, {0x03B7, 0x0301, 0x03AE},
    {0x03B9, 0x0301, 0x03AF}, {0x03B9, 0x0308, 0x03CA},
    {0x03BF, 0x0301, 0x03CC}, {0x03C5, 0x0301, 0x03CD},
    {0x03C5, 0x0308, 0x03CB}, {0x03C9, 0x0301, 0x03CE},
    {0x03CA, 0x0301, 0x0390}, {0x03CB, 0x0301, 0x03B0},
}};

char32_t lookup_composition(char32_t base, char32_t mark) {
  for (const auto& c : kCompositions)
    if (c.base == base && c.mark == mark) return c.composed;
  for (const auto& c : kCompositionsGreekSmall)
    if (c.base == base && c.mark == mark) return c.composed;
  return 0;
}

}  // namespace

void compose_canonical(std::vector<char32_t>& cps) {
  size_t w = 0;
  for (size_t r = 0; r < cps.size(); ++r) {
    if (w > 0) {
      const char32_t composed = lookup_composition(cps[w - 1], cps[r]);
      if (composed != 0) {
        cps[w - 1] = composed;
        continue;
      }
    }
    cps[w++] = cps[r];
  }
  cps.resize(w);
}

std::string normalize_text(const std::string& s) {
  std::vector<char32_t> cps;
  if (!utf8_decode(s, cps)) return s;
  compose_canonical(cps);
  return utf8_encode(cps);
}

std::string canonicalize_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
        c == '\v') {
      if (!out.empty()) pending_space = true;
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace xlit

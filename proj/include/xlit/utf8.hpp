#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xlit {

// Strict UTF-8 decode. Returns false on malformed input (overlong forms,
// surrogates, truncated sequences); `out` then holds the prefix decoded so far.
bool utf8_decode(std::string_view s, std::vector<char32_t>& out);

void utf8_append(std::string& s, char32_t cp);

std::string utf8_encode(const std::vector<char32_t>& cps);

}  // namespace xlit

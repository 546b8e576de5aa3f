#pragma once

#include <string>
#include <vector>

namespace xlit {

// Canonical composition over a fixed table: Greek tonos/dialytika and the
// common Latin diacritics. Combining marks without a precomposed form (Hebrew
// niqqud, Arabic harakat) are canonical under NFC already and pass through.
// This is the normalization step applied before rule matching and encoding;
// it covers exactly the scripts the bundled rule tables target.
void compose_canonical(std::vector<char32_t>& cps);

// UTF-8 in, UTF-8 out. Invalid byte sequences are returned unchanged; callers
// that must reject invalid input validate before normalizing.
std::string normalize_text(const std::string& s);

// Collapse runs of ASCII whitespace to single spaces and trim the ends.
std::string canonicalize_whitespace(const std::string& s);

}  // namespace xlit

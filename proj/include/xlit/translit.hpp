#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace xlit::translit {

// Four-character script identifier: first letter uppercase, rest lowercase
// (Latn, Grek, Arab, ...).
struct ScriptCode {
  std::string code;

  static ScriptCode of(const std::string& c);
  bool operator==(const ScriptCode& o) const { return code == o.code; }
  bool operator!=(const ScriptCode& o) const { return code != o.code; }
};

// One grapheme-rewrite rule. Priority is the source length: longer sources
// match first.
struct Rule {
  std::vector<char32_t> source;  // non-empty
  std::string target;            // Latin output alphabet only, may be empty
};

// Characters the romanizer may emit: ASCII letters, digits, space,
// apostrophe, hyphen.
bool is_latin_output_char(char32_t cp);

class RuleTable {
 public:
  // Inserts a rule; rejects duplicate sources.
  void add(Rule rule);

  // Longest rule matching a prefix of cps[pos..], or nullptr.
  const Rule* match(const std::vector<char32_t>& cps, size_t pos) const;

  size_t size() const { return count_; }

 private:
  // First code point -> rules sorted by descending source length.
  std::unordered_map<char32_t, std::vector<Rule>> buckets_;
  size_t count_ = 0;
};

// Parse a UTF-8 TSV rule file: `source<TAB>target`, '#' comments, blank lines
// skipped. Throws DataError naming the offending line on malformed rows,
// duplicate sources or non-Latin target characters.
RuleTable load_rules(const std::string& path);

// Majority script of the script-bearing code points; empty or script-less
// input maps to Latn. Ties go to the script of the earliest code point that
// belongs to one of the tied scripts.
ScriptCode detect_script(const std::string& text);

struct RomanizeStats {
  size_t dropped = 0;  // unmatched non-Latin code points
};

// NFC-normalize, then rewrite left to right by longest match. Printable ASCII
// passes through unchanged; unmatched non-Latin code points are dropped and
// counted. Total and pure: never throws on text content.
std::string romanize(const std::string& text, const RuleTable& table,
                     RomanizeStats* stats = nullptr);

// Line-by-line romanization, preserving line count. Throws DataError naming
// the line number on invalid UTF-8. Returns the number of lines written.
size_t romanize_corpus(const std::string& in_path, const RuleTable& table,
                       const std::string& out_path,
                       RomanizeStats* stats = nullptr);

}  // namespace xlit::translit

#include "xlit/translit.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "xlit/io.hpp"
#include "xlit/textnorm.hpp"
#include "xlit/utf8.hpp"

namespace xlit::translit {

namespace {

struct ScriptRange {
  char32_t lo;
  char32_t hi;
  const char* code;
};

// Unicode script-property ranges for the scripts this artifact routes.
// Coverage is deliberately partial: letters only, major blocks.
constexpr std::array<ScriptRange, 28> kScriptRanges = {{
    {0x0041, 0x005A, "Latn"}, {0x0061, 0x007A, "Latn"},
    {0x00C0, 0x00D6, "Latn"}, {0x00D8, 0x00F6, "Latn"},
    {0x00F8, 0x024F, "Latn"}, {0x1E00, 0x1EFF, "Latn"},
    {0x0370, 0x03FF, "Grek"}, {0x1F00, 0x1FFF, "Grek"},
    {0x0400, 0x052F, "Cyrl"},
    {0x0590, 0x05FF, "Hebr"},
    {0x0600, 0x06FF, "Arab"}, {0x0750, 0x077F, "Arab"},
    {0x08A0, 0x08FF, "Arab"}, {0xFB50, 0xFDFF, "Arab"},
    {0xFE70, 0xFEFF, "Arab"},
    {0x0900, 0x097F, "Deva"},
    {0x0E00, 0x0E7F, "Thai"},
    {0x0E80, 0x0EFF, "Laoo"},
    {0x0F00, 0x0FFF, "Tibt"},
    {0x1000, 0x109F, "Mymr"},
    {0x1200, 0x139F, "Ethi"},
    {0x1100, 0x11FF, "Hang"}, {0x3130, 0x318F, "Hang"},
    {0xAC00, 0xD7AF, "Hang"},
    {0x3040, 0x309F, "Hira"}, {0x30A0, 0x30FF, "Kana"},
    {0x3400, 0x4DBF, "Hani"}, {0x4E00, 0x9FFF, "Hani"},
}};

const char* script_of(char32_t cp) {
  for (const auto& r : kScriptRanges)
    if (cp >= r.lo && cp <= r.hi) return r.code;
  return nullptr;
}

bool is_passthrough(char32_t cp) {
  return (cp >= 0x20 && cp <= 0x7E) || cp == '\t';
}

// Lenient decode for the total romanize path: invalid bytes become U+FFFD.
std::vector<char32_t> decode_lenient(const std::string& s) {
  std::vector<char32_t> cps;
  size_t i = 0;
  while (i < s.size()) {
    std::vector<char32_t> one;
    // Try to decode the longest valid prefix from position i.
    size_t len = 1;
    const auto b0 = static_cast<unsigned char>(s[i]);
    if ((b0 & 0xE0) == 0xC0) len = 2;
    else if ((b0 & 0xF0) == 0xE0) len = 3;
    else if ((b0 & 0xF8) == 0xF0) len = 4;
    len = std::min(len, s.size() - i);
    if (utf8_decode(std::string_view(s).substr(i, len), one) && one.size() == 1) {
      cps.push_back(one[0]);
      i += len;
    } else {
      cps.push_back(0xFFFD);
      i += 1;
    }
  }
  return cps;
}

}  // namespace

ScriptCode ScriptCode::of(const std::string& c) {
  const bool ok = c.size() == 4 && std::isupper(static_cast<unsigned char>(c[0])) &&
                  std::islower(static_cast<unsigned char>(c[1])) &&
                  std::islower(static_cast<unsigned char>(c[2])) &&
                  std::islower(static_cast<unsigned char>(c[3]));
  if (!ok) throw DataError("invalid script code: " + c);
  return ScriptCode{c};
}

bool is_latin_output_char(char32_t cp) {
  return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
         (cp >= '0' && cp <= '9') || cp == ' ' || cp == '\'' || cp == '-';
}

void RuleTable::add(Rule rule) {
  if (rule.source.empty()) throw DataError("rule with empty source");
  auto& bucket = buckets_[rule.source[0]];
  for (const Rule& r : bucket)
    if (r.source == rule.source)
      throw DataError("duplicate rule source");
  bucket.push_back(std::move(rule));
  std::sort(bucket.begin(), bucket.end(), [](const Rule& a, const Rule& b) {
    if (a.source.size() != b.source.size())
      return a.source.size() > b.source.size();
    return a.source < b.source;
  });
  ++count_;
}

const Rule* RuleTable::match(const std::vector<char32_t>& cps,
                             size_t pos) const {
  const auto it = buckets_.find(cps[pos]);
  if (it == buckets_.end()) return nullptr;
  for (const Rule& r : it->second) {
    if (pos + r.source.size() > cps.size()) continue;
    if (std::equal(r.source.begin(), r.source.end(), cps.begin() + pos))
      return &r;
  }
  return nullptr;
}

RuleTable load_rules(const std::string& path) {
  RuleTable table;
  const std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    const std::string where = path + ":" + std::to_string(i + 1);
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw DataError(where + ": expected exactly two tab-separated columns");
    Rule rule;
    if (!utf8_decode(std::string_view(line).substr(0, tab), rule.source))
      throw DataError(where + ": invalid UTF-8 in source column");
    if (rule.source.empty()) throw DataError(where + ": empty source");
    // Match against normalized text, so store the normalized form.
    compose_canonical(rule.source);
    rule.target = line.substr(tab + 1);
    std::vector<char32_t> target_cps;
    if (!utf8_decode(rule.target, target_cps))
      throw DataError(where + ": invalid UTF-8 in target column");
    for (char32_t cp : target_cps)
      if (!is_latin_output_char(cp))
        throw DataError(where + ": target contains non-Latin character");
    try {
      table.add(std::move(rule));
    } catch (const DataError&) {
      throw DataError(where + ": duplicate source");
    }
  }
  return table;
}

ScriptCode detect_script(const std::string& text) {
  std::vector<char32_t> cps = decode_lenient(text);
  std::unordered_map<const char*, size_t> counts;
  for (char32_t cp : cps) {
    if (const char* sc = script_of(cp)) counts[sc]++;
  }
  if (counts.empty()) return ScriptCode{"Latn"};
  size_t best = 0;
  for (const auto& [sc, n] : counts) best = std::max(best, n);
  // Tie break: earliest code point belonging to a script with the top count.
  for (char32_t cp : cps) {
    const char* sc = script_of(cp);
    if (sc != nullptr && counts[sc] == best) return ScriptCode{sc};
  }
  return ScriptCode{"Latn"};  // unreachable
}

std::string romanize(const std::string& text, const RuleTable& table,
                     RomanizeStats* stats) {
  std::vector<char32_t> cps = decode_lenient(text);
  compose_canonical(cps);
  std::string out;
  out.reserve(text.size());
  size_t pos = 0;
  while (pos < cps.size()) {
    const char32_t cp = cps[pos];
    if (is_passthrough(cp)) {
      out.push_back(static_cast<char>(cp));
      ++pos;
      continue;
    }
    if (const Rule* r = table.match(cps, pos)) {
      out += r->target;
      pos += r->source.size();
      continue;
    }
    if (stats != nullptr) stats->dropped++;
    ++pos;
  }
  return out;
}

size_t romanize_corpus(const std::string& in_path, const RuleTable& table,
                       const std::string& out_path, RomanizeStats* stats) {
  const std::vector<std::string> lines = read_lines(in_path);
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    std::vector<char32_t> check;
    if (!utf8_decode(lines[i], check))
      throw DataError(in_path + ":" + std::to_string(i + 1) +
                      ": invalid UTF-8");
    out += romanize(lines[i], table, stats);
    out += '\n';
  }
  write_file_atomic(out_path, out);
  return lines.size();
}

}  // namespace xlit::translit

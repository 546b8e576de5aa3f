#include "xlit/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "xlit/io.hpp"
#include "xlit/textnorm.hpp"

namespace xlit::tokenizer {

namespace {

const char* kSpecialNames[kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                           "[MASK]"};

// Bytes outside visible ASCII (and '<' itself) are stored as <0xHH> so the
// vocab file stays valid UTF-8 one-token-per-line.
std::string escape_token(const std::string& t) {
  std::string out;
  for (unsigned char b : t) {
    if (b > 0x20 && b < 0x7F && b != '<') {
      out.push_back(static_cast<char>(b));
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "<0x%02X>", b);
      out += buf;
    }
  }
  return out;
}

std::string unescape_token(const std::string& line, const std::string& where) {
  std::string out;
  size_t i = 0;
  while (i < line.size()) {
    if (line[i] == '<') {
      if (i + 5 >= line.size() || line.compare(i, 3, "<0x") != 0 ||
          line[i + 5] != '>')
        throw DataError(where + ": malformed byte escape");
      const std::string hex = line.substr(i + 3, 2);
      out.push_back(static_cast<char>(std::stoi(hex, nullptr, 16)));
      i += 6;
    } else {
      out.push_back(line[i]);
      ++i;
    }
  }
  return out;
}

// Split a normalized line into tokenizer pieces: first word bare, following
// words with a leading space byte.
std::vector<std::string> line_pieces(const std::string& normalized) {
  std::vector<std::string> pieces;
  size_t pos = 0;
  while (pos < normalized.size()) {
    size_t sp = normalized.find(' ', pos);
    if (sp == std::string::npos) sp = normalized.size();
    std::string piece = normalized.substr(pos, sp - pos);
    if (!pieces.empty()) piece.insert(piece.begin(), ' ');
    if (!piece.empty()) pieces.push_back(std::move(piece));
    pos = sp + 1;
  }
  return pieces;
}

}  // namespace

std::string normalize(const std::string& text) {
  return canonicalize_whitespace(normalize_text(text));
}

void Vocab::add_token(const std::string& t) {
  index_.emplace(t, static_cast<int>(tokens_.size()));
  tokens_.push_back(t);
  max_token_bytes_ = std::max(max_token_bytes_, t.size());
}

Vocab Vocab::train(const std::vector<std::string>& corpus_paths, int size,
                   uint64_t /*seed*/) {
  if (size < kNumSpecials + 1)
    throw DataError("vocab size must be at least " +
                    std::to_string(kNumSpecials + 1));

  // Piece -> multiplicity, as symbol sequences over byte strings.
  std::map<std::vector<std::string>, long long> pieces;
  std::set<std::string> alphabet;
  alphabet.insert(" ");
  long long total_words = 0;
  for (const std::string& path : corpus_paths) {
    for (const std::string& line : read_lines(path)) {
      for (std::string& piece : line_pieces(normalize(line))) {
        ++total_words;
        std::vector<std::string> symbols;
        symbols.reserve(piece.size());
        for (char b : piece) {
          symbols.emplace_back(1, b);
          alphabet.insert(symbols.back());
        }
        pieces[symbols]++;
      }
    }
  }
  if (total_words == 0) throw DataError("empty corpus: nothing to train on");

  Vocab v;
  for (int i = 0; i < kNumSpecials; ++i) v.add_token(kSpecialNames[i]);
  if (static_cast<long long>(alphabet.size()) + kNumSpecials > size)
    throw DataError("vocab size " + std::to_string(size) +
                    " too small for byte alphabet of " +
                    std::to_string(alphabet.size()));
  for (const std::string& b : alphabet) v.add_token(b);

  while (v.size() < size) {
    // Count adjacent symbol pairs, weighted by piece multiplicity.
    std::map<std::pair<std::string, std::string>, long long> pair_counts;
    for (const auto& [symbols, count] : pieces)
      for (size_t i = 0; i + 1 < symbols.size(); ++i)
        pair_counts[{symbols[i], symbols[i + 1]}] += count;

    long long best_count = 0;
    const std::pair<std::string, std::string>* best = nullptr;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count) {  // map order breaks ties lexicographically
        best_count = count;
        best = &pair;
      }
    }
    if (best == nullptr || best_count < 2) break;

    const std::string merged = best->first + best->second;
    v.add_token(merged);

    std::map<std::vector<std::string>, long long> next;
    for (const auto& [symbols, count] : pieces) {
      std::vector<std::string> out;
      out.reserve(symbols.size());
      size_t i = 0;
      while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == best->first &&
            symbols[i + 1] == best->second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(symbols[i]);
          ++i;
        }
      }
      next[std::move(out)] += count;
    }
    pieces = std::move(next);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::string content;
  for (int i = 0; i < size(); ++i) {
    content += i < kNumSpecials ? tokens_[i] : escape_token(tokens_[i]);
    content += '\n';
  }
  write_file_atomic(path, content);
}

Vocab Vocab::load(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.size() < kNumSpecials)
    throw DataError(path + ": vocab file too short");
  Vocab v;
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string where = path + ":" + std::to_string(i + 1);
    if (i < kNumSpecials) {
      if (lines[i] != kSpecialNames[i])
        throw DataError(where + ": expected special token " +
                        std::string(kSpecialNames[i]));
      v.add_token(lines[i]);
    } else {
      const std::string tok = unescape_token(lines[i], where);
      if (tok.empty()) throw DataError(where + ": empty token");
      if (v.index_.count(tok)) throw DataError(where + ": duplicate token");
      v.add_token(tok);
    }
  }
  return v;
}

std::vector<int> Vocab::encode_piece(const std::string& piece) const {
  std::vector<int> ids;
  size_t pos = 0;
  while (pos < piece.size()) {
    const size_t longest = std::min(max_token_bytes_, piece.size() - pos);
    int id = kUnkId;
    size_t taken = 1;
    for (size_t len = longest; len >= 1; --len) {
      const auto it = index_.find(piece.substr(pos, len));
      if (it != index_.end() && it->second >= kNumSpecials) {
        id = it->second;
        taken = len;
        break;
      }
    }
    ids.push_back(id);
    pos += taken;
  }
  return ids;
}

int EncodedSequence::real_len() const {
  int n = 0;
  for (int a : attention) n += a;
  return n;
}

std::vector<int> tokenize_line(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const std::string& piece : line_pieces(normalize(text)))
    for (int id : vocab.encode_piece(piece)) ids.push_back(id);
  return ids;
}

EncodedSequence encode(const std::string& text, const Vocab& vocab,
                       int max_len) {
  if (max_len < 3) throw DataError("max_len must be >= 3");
  std::vector<int> body = tokenize_line(text, vocab);
  if (static_cast<int>(body.size()) > max_len - 2)
    body.resize(static_cast<size_t>(max_len - 2));

  EncodedSequence seq;
  seq.ids.reserve(static_cast<size_t>(max_len));
  seq.ids.push_back(kClsId);
  seq.ids.insert(seq.ids.end(), body.begin(), body.end());
  seq.ids.push_back(kSepId);
  const int real = static_cast<int>(seq.ids.size());
  seq.ids.resize(static_cast<size_t>(max_len), kPadId);
  seq.attention.assign(static_cast<size_t>(max_len), 0);
  seq.special_flags.assign(static_cast<size_t>(max_len), 1);
  for (int i = 0; i < real; ++i) seq.attention[static_cast<size_t>(i)] = 1;
  for (int i = 1; i + 1 < real; ++i)
    seq.special_flags[static_cast<size_t>(i)] = 0;
  return seq;
}

std::string decode(const EncodedSequence& seq, const Vocab& vocab) {
  std::string out;
  for (int id : seq.ids)
    if (!vocab.is_special(id)) out += vocab.token(id);
  return out;
}

std::vector<int> MaskedItem::mask_positions() const {
  std::vector<int> pos;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kIgnoreId) pos.push_back(static_cast<int>(i));
  return pos;
}

MaskedItem mask_tokens(const EncodedSequence& seq, double prob,
                       const Vocab& vocab, Rng& rng) {
  if (prob < 0.0 || prob > 1.0) throw DataError("mask prob must be in [0,1]");
  MaskedItem item;
  item.input = seq;
  item.labels.assign(seq.ids.size(), kIgnoreId);
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.special_flags[i] != 0) continue;
    if (!rng.bernoulli(prob)) continue;
    item.labels[i] = seq.ids[i];
    const double r = rng.uniform();
    if (r < 0.8) {
      item.input.ids[i] = kMaskId;
    } else if (r < 0.9) {
      item.input.ids[i] =
          static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vocab.size())));
    }  // else keep the original token
  }
  return item;
}

}  // namespace xlit::tokenizer

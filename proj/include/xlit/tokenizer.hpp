#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlit/rng.hpp"

namespace xlit::tokenizer {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecials = 5;
inline constexpr int kIgnoreId = -1;

// Subword vocabulary: specials at ids 0..4, then the byte alphabet seen in
// the training corpus, then learned merges. Tokens are byte strings; words
// after the first on a line carry a leading space byte, so decoding is plain
// concatenation.
class Vocab {
 public:
  Vocab() = default;  // empty; fill via train() or load()

  // Greedy byte-pair merging over whitespace-split words until `size` tokens
  // (or until no adjacent pair repeats). `seed` is reserved; training is
  // fully deterministic in the corpus content and order.
  static Vocab train(const std::vector<std::string>& corpus_paths, int size,
                     uint64_t seed);

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_[id]; }
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  // Longest-match segmentation of one piece (bytes). Unknown bytes map to UNK.
  std::vector<int> encode_piece(const std::string& piece) const;

 private:
  void add_token(const std::string& t);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  size_t max_token_bytes_ = 1;
};

// Token ids with attention mask and structural-special flags. Fixed length
// max_len: CLS ... SEP then PAD. special_flags marks CLS/SEP/PAD positions
// (a MASK token at a content position is not special).
struct EncodedSequence {
  std::vector<int> ids;
  std::vector<int> attention;
  std::vector<int> special_flags;

  int length() const { return static_cast<int>(ids.size()); }
  int real_len() const;  // positions before padding
};

// Applied before segmentation: canonical composition plus whitespace
// canonicalization. decode(encode(x)) == normalize(x) for in-vocab text.
std::string normalize(const std::string& text);

EncodedSequence encode(const std::string& text, const Vocab& vocab,
                       int max_len);

// Subword ids of a line without specials, truncation or padding.
std::vector<int> tokenize_line(const std::string& text, const Vocab& vocab);

std::string decode(const EncodedSequence& seq, const Vocab& vocab);

struct MaskedItem {
  EncodedSequence input;
  std::vector<int> labels;  // original id at masked positions, else kIgnoreId

  std::vector<int> mask_positions() const;
};

using MaskedBatch = std::vector<MaskedItem>;

// BERT-style masking: each non-special position is selected with probability
// `prob`; of the selected, 80% become MASK, 10% a uniform random vocab id,
// 10% stay unchanged. Labels carry the original ids on selected positions.
MaskedItem mask_tokens(const EncodedSequence& seq, double prob,
                       const Vocab& vocab, Rng& rng);

}  // namespace xlit::tokenizer

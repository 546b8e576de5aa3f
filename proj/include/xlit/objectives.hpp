#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xlit/encoder.hpp"
#include "xlit/numcore.hpp"
#include "xlit/rng.hpp"
#include "xlit/tokenizer.hpp"

namespace xlit::objectives {

// Ablation switches. MLM is always on; the grid is mlm / mlm+seq / mlm+tlm /
// full.
struct Toggles {
  bool mlm = true;
  bool seq = false;
  bool tlm = false;

  static Toggles parse(const std::string& name);  // mlm|mlm+seq|mlm+tlm|full
  std::string str() const;
};

struct Hyper {
  double mask_prob = 0.15;
  double tau = 1.0;
  int max_len = 64;
};

// Aligned sentence pairs: each latn member is the romanization of its orig
// member, encoded with the shared vocabulary.
struct PairBatch {
  std::vector<std::pair<tokenizer::EncodedSequence, tokenizer::EncodedSequence>>
      pairs;

  int size() const { return static_cast<int>(pairs.size()); }
};

// Component losses plus their sum on one shared graph. Disabled components
// are absent, not zero.
struct LossBreakdown {
  std::optional<double> mlm_orig, mlm_latn, seq, tlm;
  numcore::TensorPtr total;

  double total_value() const { return total->item(); }
};

// Mean cross entropy of the MLM head at masked positions. Zero masked
// positions anywhere in the batch yields a constant 0 (with a warning).
numcore::TensorPtr mlm_loss(numcore::Graph& g, const encoder::Parameters& p,
                            const encoder::ModelConfig& cfg,
                            const tokenizer::MaskedBatch& batch);

// Contrastive core on fixed pooled embeddings, ordered
// [orig_0..orig_{N-1}, latn_0..latn_{N-1}]. For every anchor the positive is
// its partner; the denominator holds the positive plus both members of every
// other pair (the anchor itself is excluded). Mean over the 2N anchors.
numcore::TensorPtr contrastive_from_embeddings(
    numcore::Graph& g, const std::vector<numcore::TensorPtr>& pooled,
    double tau);

// Full path: mean-pooled layer-k embeddings of the unmasked pair batch, dot
// product similarity, temperature tau.
numcore::TensorPtr seq_contrastive_loss(numcore::Graph& g,
                                        const encoder::Parameters& p,
                                        const encoder::ModelConfig& cfg,
                                        const PairBatch& batch, double tau);

// CLS s1 SEP s2 SEP with the segment order drawn uniformly; segments capped
// at floor((max_len-3)/2) when the pair does not fit. Positions run
// continuously across the boundary (no reset).
tokenizer::EncodedSequence build_tlm_pair(const tokenizer::EncodedSequence& orig,
                                          const tokenizer::EncodedSequence& latn,
                                          int max_len, Rng& rng);

numcore::TensorPtr tlm_loss(numcore::Graph& g, const encoder::Parameters& p,
                            const encoder::ModelConfig& cfg,
                            const PairBatch& batch, double prob, int max_len,
                            const tokenizer::Vocab& vocab, Rng& rng);

// total = mlm_orig + mlm_latn [+ seq] [+ tlm], unweighted. RNG draw order:
// orig masking, latn masking, then per pair TLM order + masking.
LossBreakdown combined_loss(numcore::Graph& g, const encoder::Parameters& p,
                            const encoder::ModelConfig& cfg,
                            const PairBatch& batch, const Toggles& toggles,
                            const Hyper& hyper, const tokenizer::Vocab& vocab,
                            Rng& rng);

}  // namespace xlit::objectives

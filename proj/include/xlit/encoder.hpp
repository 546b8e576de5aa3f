#pragma once

#include <string>
#include <vector>

#include "xlit/io.hpp"
#include "xlit/numcore.hpp"
#include "xlit/tokenizer.hpp"

namespace xlit::encoder {

struct ModelConfig {
  int layers = 4;
  int hidden = 64;
  int heads = 4;
  int ffn = 256;
  int vocab = 512;
  int max_positions = 64;
  int pool_layer = 3;  // default round(2L/3)

  static ModelConfig desk();
  static int default_pool_layer(int layers);
  void validate() const;
  KvPairs to_kv() const;
  static ModelConfig from_kv(const KvPairs& kv, const std::string& where);
};

// Encoder weights. The MLM head projection is tied to tok_emb.
struct Parameters {
  struct Layer {
    numcore::TensorPtr ln1_gain, ln1_bias;
    numcore::TensorPtr wq, bq, wk, wv, bv, wo, bo;  // key bias omitted: softmax shift-invariance zeroes its gradient
    numcore::TensorPtr ln2_gain, ln2_bias;
    numcore::TensorPtr w1, b1, w2, b2;
  };

  numcore::TensorPtr tok_emb;  // [V,d]
  numcore::TensorPtr pos_emb;  // [P,d]
  std::vector<Layer> layers;
  numcore::TensorPtr head_w, head_b;           // [d,d],[d]
  numcore::TensorPtr head_ln_gain, head_ln_bias;
  numcore::TensorPtr head_out_bias;            // [V]

  std::vector<std::pair<std::string, numcore::TensorPtr>> named() const;
  std::vector<numcore::TensorPtr> all() const;
  void zero_grads() const;
  Parameters clone() const;  // deep copy of values, fresh zero grads
};

Parameters init_parameters(const ModelConfig& cfg, uint64_t seed);

// Per-layer residual-stream states: layers[0] is the embedding sum,
// layers[k] (1 <= k <= L) the output after block k. One tensor per sequence,
// trimmed to its unpadded length (PAD positions are never computed, which is
// what makes PAD-invariance exact).
struct HiddenStates {
  std::vector<std::vector<numcore::TensorPtr>> layers;  // [L+1][batch]

  int num_layers() const { return static_cast<int>(layers.size()) - 1; }
  int batch_size() const { return layers.empty() ? 0 : static_cast<int>(layers[0].size()); }
};

// Pre-layernorm transformer stack over the batch. Deterministic; safe to call
// concurrently with immutable Parameters (each call owns its Graph).
HiddenStates forward(numcore::Graph& g, const Parameters& p,
                     const ModelConfig& cfg,
                     const std::vector<tokenizer::EncodedSequence>& batch);

// Dense + gelu + layernorm + tied-embedding projection + bias.
numcore::TensorPtr mlm_logits(numcore::Graph& g, const Parameters& p,
                              const numcore::TensorPtr& final_hidden);

// Mean over content positions (PAD/CLS/SEP excluded; MASK included).
// Throws when every position is excluded.
numcore::TensorPtr mean_pool(numcore::Graph& g,
                             const numcore::TensorPtr& layer_hidden,
                             const tokenizer::EncodedSequence& seq);

struct Checkpoint {
  ModelConfig config;
  Parameters params;
  long long step = 0;
};

// Directory layout: config.txt, manifest.txt (step count), one .tsr dump per
// named parameter. Written to a temp dir and renamed into place.
void save_checkpoint(const std::string& dir, const Parameters& p,
                     const ModelConfig& cfg, long long step);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace xlit::encoder

#pragma once

#include <string>
#include <vector>

#include "xlit/encoder.hpp"
#include "xlit/objectives.hpp"
#include "xlit/rng.hpp"
#include "xlit/tokenizer.hpp"
#include "xlit/translit.hpp"

namespace xlit::pipeline {

// Two named profiles ship: "paper" carries full-scale reference settings
// (sized for a large encoder), "desk" is tuned for the toy model.
struct TrainConfig {
  double lr0 = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double mask_prob = 0.15;
  double tau = 1.0;
  int max_len = 64;
  int batch = 8;        // pairs per micro-batch (N)
  int grad_accum = 1;   // micro-batches per optimizer step (A)
  int epochs = 20;
  int checkpoint_every = 50;
  uint64_t seed = 42;

  static TrainConfig desk();
  static TrainConfig paper();
  static TrainConfig profile(const std::string& name);
  void validate() const;
  KvPairs to_kv() const;
  void apply_kv(const KvPairs& kv, const std::string& where);
};

struct OptimizerState {
  std::vector<std::vector<double>> m, v;  // parallel to the parameter list
  long long t = 0;

  static OptimizerState init(const std::vector<numcore::TensorPtr>& params);
};

// target = max(ceil(fraction*lines), floor); takes everything when the target
// reaches the corpus size, otherwise a uniform sample without replacement in
// original order. Returns the number of lines written.
size_t sample_corpus(const std::string& in_path, double fraction,
                     long long floor_count, Rng& rng,
                     const std::string& out_path);

// Encode every line alongside its romanization. Empty lines are skipped and
// counted.
objectives::PairBatch build_pair_corpus(const std::string& orig_path,
                                        const translit::RuleTable& table,
                                        const tokenizer::Vocab& vocab,
                                        int max_len,
                                        size_t* skipped_empty = nullptr);

// Pair files: "# max_len N" header, then one pair per line as two
// tab-separated lists of unpadded token ids (CLS ... SEP).
void save_pairs(const std::string& path, const objectives::PairBatch& batch,
                int max_len);
objectives::PairBatch load_pairs(const std::string& path, int* max_len = nullptr);

// Decoupled weight decay: theta -= lr * (mhat/(sqrt(vhat)+eps) + wd*theta).
void adamw_step(const std::vector<numcore::TensorPtr>& params,
                OptimizerState& state, double lr, const TrainConfig& cfg);

double linear_lr(long long t, long long total, double lr0);

struct TrainResult {
  std::vector<std::string> checkpoint_dirs;  // periodic then final
  std::string loss_log_path;
  long long steps = 0;
};

// Mutates `params` in place. Writes periodic checkpoints plus a final one and
// a per-step CSV loss log under out_dir. Aborts with NumericError naming the
// component on non-finite loss.
TrainResult train(encoder::Parameters& params, const encoder::ModelConfig& cfg,
                  const objectives::PairBatch& data, const TrainConfig& tcfg,
                  const objectives::Toggles& toggles,
                  const tokenizer::Vocab& vocab, const std::string& out_dir);

// Scores each checkpoint by top-k retrieval accuracy on the dev pairs
// (orig queries, latn candidates); returns the best, ties to the lowest step.
std::string select_best_checkpoint(const std::vector<std::string>& ckpt_dirs,
                                   const objectives::PairBatch& dev_pairs,
                                   int k);

}  // namespace xlit::pipeline

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlit/encoder.hpp"
#include "xlit/objectives.hpp"
#include "xlit/tokenizer.hpp"

namespace xlit::evalsuite {

// Row i = mean-pooled layer-k states of sequence i (no masking, no grads).
numcore::TensorPtr sentence_embeddings(
    const encoder::Parameters& p, const encoder::ModelConfig& cfg,
    const std::vector<tokenizer::EncodedSequence>& seqs, int pool_layer);

struct RetrievalResult {
  int k = 0;
  double accuracy = 0.0;
  int queries = 0;
  std::vector<uint8_t> hits;
};

// Query i hits iff row i is among the k most cosine-similar target rows;
// float ties break toward the lower index. Zero-norm rows score -inf against
// everything.
RetrievalResult retrieval_topk(const numcore::Tensor& source,
                               const numcore::Tensor& target, int k);

// Unweighted mean F1 over the classes present in gold or pred; classes absent
// from both are excluded from the average.
double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred,
                int num_classes);

struct FinetuneConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  int epochs = 40;
  int batch = 32;
  int max_len = 64;
  int patience = 5;  // evals without val improvement before stopping
  uint64_t seed = 42;
};

struct LabeledExample {
  std::string text;
  int label = 0;
};

struct ClassifierModel {
  encoder::Parameters params;
  numcore::TensorPtr head_w;  // [d, classes]
  numcore::TensorPtr head_b;  // [classes]
  double best_val_f1 = 0.0;
  int epochs_run = 0;
};

// Full fine-tuning with a linear head on the final-layer CLS vector. Early
// stopping on validation macro-F1; returns the best-validation snapshot.
ClassifierModel finetune_classifier(const encoder::Parameters& init,
                                    const encoder::ModelConfig& cfg,
                                    const tokenizer::Vocab& vocab,
                                    const std::vector<LabeledExample>& train,
                                    const std::vector<LabeledExample>& val,
                                    int num_classes, const FinetuneConfig& fc);

std::vector<int> classify(const ClassifierModel& model,
                          const encoder::ModelConfig& cfg,
                          const tokenizer::Vocab& vocab,
                          const std::vector<std::string>& texts, int max_len);

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<int> tags;  // aligned to tokens
};

struct TaggerModel {
  encoder::Parameters params;
  numcore::TensorPtr head_w;  // [d, tags]
  numcore::TensorPtr head_b;
  double best_val_f1 = 0.0;
  int epochs_run = 0;
};

// Per-position linear head over final hidden states. Labels attach to the
// first subword of each word; remaining subwords and specials are IGNORE.
TaggerModel finetune_tagger(const encoder::Parameters& init,
                            const encoder::ModelConfig& cfg,
                            const tokenizer::Vocab& vocab,
                            const std::vector<TaggedSentence>& train,
                            const std::vector<TaggedSentence>& val,
                            int num_tags, const FinetuneConfig& fc);

// Predicted tag per word (first-subword position) for each sentence.
std::vector<std::vector<int>> tag_sentences(
    const TaggerModel& model, const encoder::ModelConfig& cfg,
    const tokenizer::Vocab& vocab,
    const std::vector<TaggedSentence>& sentences, int max_len);

// Distinct non-special token ids used when tokenizing the corpora.
size_t vocab_coverage(const std::vector<std::string>& corpus_paths,
                      const tokenizer::Vocab& vocab);

// Shared string-label inventory; ids are assigned in order of first sight.
class LabelMap {
 public:
  int id_of(const std::string& name, bool create);
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
};

// `label<TAB>text` rows; unseen labels extend `labels` when create is set,
// otherwise they are an error.
std::vector<LabeledExample> load_labeled_tsv(const std::string& path,
                                             LabelMap& labels, bool create);

// CoNLL-style `token<TAB>tag` rows with blank-line sentence separators.
std::vector<TaggedSentence> load_conll(const std::string& path, LabelMap& tags,
                                       bool create);

struct MetricReport {
  struct Entry {
    std::string combo;   // base | mlm | mlm+seq | mlm+tlm | mlm+seq+tlm
    std::string task;    // retrieval | classify | tag
    std::string source;  // source-side label (script or language tag)
    std::string target;
    double score = 0.0;  // fraction in [0,1]
  };
  std::vector<Entry> entries;
  std::vector<uint64_t> seeds;

  std::string to_csv() const;
  std::string to_table() const;  // aligned text, combos as rows
};

struct AblationTasks {
  // Retrieval is always evaluated.
  const objectives::PairBatch* retrieval_pairs = nullptr;
  int k = 10;
  std::string source_label = "orig";
  std::string target_label = "latn";
  // Optional classification task.
  const std::vector<LabeledExample>* cls_train = nullptr;
  const std::vector<LabeledExample>* cls_val = nullptr;
  const std::vector<LabeledExample>* cls_test = nullptr;
  int cls_classes = 0;
  FinetuneConfig cls_config;
  std::vector<uint64_t> seeds = {42};
};

// Scores one checkpoint per objective combination (plus the "base" row for
// the untrained starting point). jobs > 1 evaluates checkpoints in parallel.
MetricReport ablation_report(
    const std::vector<std::pair<std::string, std::string>>& combo_checkpoints,
    const tokenizer::Vocab& vocab, const AblationTasks& tasks, int jobs = 1);

}  // namespace xlit::evalsuite

#include "xlit/evalsuite.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <thread>

#include "xlit/io.hpp"
#include "xlit/pipeline.hpp"
#include "xlit/rng.hpp"

namespace xlit::evalsuite {

using numcore::Graph;
using numcore::TensorPtr;
using tokenizer::EncodedSequence;

TensorPtr sentence_embeddings(const encoder::Parameters& p,
                              const encoder::ModelConfig& cfg,
                              const std::vector<EncodedSequence>& seqs,
                              int pool_layer) {
  if (seqs.empty()) throw DataError("sentence_embeddings: empty input");
  if (pool_layer < 1 || pool_layer > cfg.layers)
    throw DataError("sentence_embeddings: pool layer out of range");
  Graph g(/*recording=*/false);
  const encoder::HiddenStates hs = encoder::forward(g, p, cfg, seqs);
  auto out = numcore::make_zeros({static_cast<int>(seqs.size()), cfg.hidden});
  for (size_t i = 0; i < seqs.size(); ++i) {
    const TensorPtr row = encoder::mean_pool(
        g, hs.layers[static_cast<size_t>(pool_layer)][i], seqs[i]);
    for (int j = 0; j < cfg.hidden; ++j)
      out->at(static_cast<int>(i), j) = row->value[static_cast<size_t>(j)];
  }
  return out;
}

RetrievalResult retrieval_topk(const numcore::Tensor& source,
                               const numcore::Tensor& target, int k) {
  if (source.rows() != target.rows() || source.cols() != target.cols())
    throw std::invalid_argument("retrieval_topk: matrix shapes disagree");
  if (k < 1) throw std::invalid_argument("retrieval_topk: k must be >= 1");
  const int n = source.rows();
  const int d = source.cols();

  auto row_norm = [d](const numcore::Tensor& m, int i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += m.at(i, j) * m.at(i, j);
    return std::sqrt(s);
  };
  std::vector<double> tnorm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) tnorm[static_cast<size_t>(i)] = row_norm(target, i);

  RetrievalResult result;
  result.k = k;
  result.queries = n;
  result.hits.assign(static_cast<size_t>(n), 0);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  size_t zero_norm_rows = 0;

  for (int i = 0; i < n; ++i) {
    const double qn = row_norm(source, i);
    std::vector<double> sims(static_cast<size_t>(n), neg_inf);
    for (int j = 0; j < n; ++j) {
      if (qn == 0.0 || tnorm[static_cast<size_t>(j)] == 0.0) {
        ++zero_norm_rows;
        continue;
      }
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += source.at(i, c) * target.at(j, c);
      sims[static_cast<size_t>(j)] = dot / (qn * tnorm[static_cast<size_t>(j)]);
    }
    // Rank of the gold row under (similarity desc, index asc).
    const double gold = sims[static_cast<size_t>(i)];
    int rank = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = sims[static_cast<size_t>(j)];
      if (s > gold || (s == gold && j < i)) ++rank;
    }
    if (rank < k) {
      result.hits[static_cast<size_t>(i)] = 1;
      result.accuracy += 1.0;
    }
  }
  if (zero_norm_rows > 0)
    std::fprintf(stderr, "warning: retrieval saw zero-norm embedding pairs\n");
  result.accuracy /= n;
  return result;
}

double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred,
                int num_classes) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("macro_f1: length mismatch");
  for (int g : gold)
    if (g < 0 || g >= num_classes) throw DataError("macro_f1: gold label outside classes");
  for (int p : pred)
    if (p < 0 || p >= num_classes) throw DataError("macro_f1: pred label outside classes");

  std::vector<long long> tp(static_cast<size_t>(num_classes), 0);
  std::vector<long long> fp(static_cast<size_t>(num_classes), 0);
  std::vector<long long> fn(static_cast<size_t>(num_classes), 0);
  std::vector<char> present(static_cast<size_t>(num_classes), 0);
  for (size_t i = 0; i < gold.size(); ++i) {
    present[static_cast<size_t>(gold[i])] = 1;
    present[static_cast<size_t>(pred[i])] = 1;
    if (gold[i] == pred[i]) {
      tp[static_cast<size_t>(gold[i])]++;
    } else {
      fp[static_cast<size_t>(pred[i])]++;
      fn[static_cast<size_t>(gold[i])]++;
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (!present[static_cast<size_t>(c)]) continue;  // absent from gold and pred
    ++counted;
    const double denom = 2.0 * tp[static_cast<size_t>(c)] +
                         fp[static_cast<size_t>(c)] + fn[static_cast<size_t>(c)];
    if (denom > 0) sum += 2.0 * tp[static_cast<size_t>(c)] / denom;
  }
  return counted == 0 ? 0.0 : sum / counted;
}

namespace {

TensorPtr cls_logits(Graph& g, const encoder::Parameters& p,
                     const encoder::ModelConfig& cfg,
                     const std::vector<EncodedSequence>& seqs,
                     const TensorPtr& head_w, const TensorPtr& head_b) {
  const encoder::HiddenStates hs = encoder::forward(g, p, cfg, seqs);
  std::vector<TensorPtr> cls_rows;
  cls_rows.reserve(seqs.size());
  for (size_t i = 0; i < seqs.size(); ++i)
    cls_rows.push_back(g.mean_rows_subset(
        hs.layers[static_cast<size_t>(cfg.layers)][i], {0}));
  return g.add_rowvec(g.matmul(g.concat_rows(cls_rows), head_w), head_b);
}

std::vector<int> argmax_rows(const numcore::Tensor& logits) {
  std::vector<int> out(static_cast<size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

pipeline::TrainConfig optimizer_config(const FinetuneConfig& fc) {
  pipeline::TrainConfig tc;
  tc.lr0 = fc.lr;
  tc.weight_decay = fc.weight_decay;
  return tc;
}

struct TaggedEncoding {
  EncodedSequence seq;
  std::vector<int> labels;          // per position, IGNORE off first-subwords
  std::vector<int> word_positions;  // position of each encoded word
};

TaggedEncoding encode_tagged(const TaggedSentence& s,
                             const tokenizer::Vocab& vocab, int max_len) {
  TaggedEncoding out;
  std::vector<int> ids;
  std::vector<int> labels;
  for (size_t w = 0; w < s.tokens.size(); ++w) {
    const std::string piece =
        w == 0 ? tokenizer::normalize(s.tokens[w])
               : " " + tokenizer::normalize(s.tokens[w]);
    bool first = true;
    for (int id : vocab.encode_piece(piece)) {
      ids.push_back(id);
      labels.push_back(first ? s.tags[w] : tokenizer::kIgnoreId);
      first = false;
    }
  }
  if (static_cast<int>(ids.size()) > max_len - 2) {
    ids.resize(static_cast<size_t>(max_len - 2));
    labels.resize(static_cast<size_t>(max_len - 2));
  }

  EncodedSequence& seq = out.seq;
  seq.ids.push_back(tokenizer::kClsId);
  seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  seq.ids.push_back(tokenizer::kSepId);
  const int real = static_cast<int>(seq.ids.size());
  seq.ids.resize(static_cast<size_t>(max_len), tokenizer::kPadId);
  seq.attention.assign(static_cast<size_t>(max_len), 0);
  seq.special_flags.assign(static_cast<size_t>(max_len), 1);
  for (int i = 0; i < real; ++i) seq.attention[static_cast<size_t>(i)] = 1;
  for (int i = 1; i + 1 < real; ++i)
    seq.special_flags[static_cast<size_t>(i)] = 0;

  out.labels.assign(static_cast<size_t>(max_len), tokenizer::kIgnoreId);
  for (size_t i = 0; i < labels.size(); ++i) {
    out.labels[i + 1] = labels[i];  // shifted past CLS
    if (labels[i] != tokenizer::kIgnoreId)
      out.word_positions.push_back(static_cast<int>(i + 1));
  }
  return out;
}

}  // namespace

ClassifierModel finetune_classifier(const encoder::Parameters& init,
                                    const encoder::ModelConfig& cfg,
                                    const tokenizer::Vocab& vocab,
                                    const std::vector<LabeledExample>& train,
                                    const std::vector<LabeledExample>& val,
                                    int num_classes, const FinetuneConfig& fc) {
  if (train.empty() || val.empty())
    throw DataError("finetune_classifier: empty split");
  if (num_classes < 2) throw DataError("finetune_classifier: classes must be >= 2");
  std::set<int> train_classes;
  for (const auto& ex : train) {
    if (ex.label < 0 || ex.label >= num_classes)
      throw DataError("finetune_classifier: label outside classes");
    train_classes.insert(ex.label);
  }
  if (train_classes.size() < 2)
    throw DataError("finetune_classifier: single-class training set");
  if (fc.max_len > cfg.max_positions)
    throw DataError("finetune_classifier: max_len exceeds model positions");

  Rng rng(fc.seed);
  ClassifierModel model;
  model.params = init.clone();
  {
    std::vector<double> w(static_cast<size_t>(cfg.hidden) * num_classes);
    for (auto& x : w) x = rng.gaussian() * 0.02;
    model.head_w = numcore::make_tensor({cfg.hidden, num_classes}, std::move(w), true);
    model.head_b = numcore::make_tensor(
        {num_classes}, std::vector<double>(static_cast<size_t>(num_classes), 0.0), true);
  }

  std::vector<EncodedSequence> train_seqs, val_seqs;
  std::vector<int> val_gold;
  for (const auto& ex : train)
    train_seqs.push_back(tokenizer::encode(ex.text, vocab, fc.max_len));
  for (const auto& ex : val) {
    val_seqs.push_back(tokenizer::encode(ex.text, vocab, fc.max_len));
    val_gold.push_back(ex.label);
  }

  std::vector<TensorPtr> plist = model.params.all();
  plist.push_back(model.head_w);
  plist.push_back(model.head_b);
  pipeline::OptimizerState opt = pipeline::OptimizerState::init(plist);
  const pipeline::TrainConfig ocfg = optimizer_config(fc);

  const long long steps_per_epoch =
      (static_cast<long long>(train.size()) + fc.batch - 1) / fc.batch;
  const long long total_steps = steps_per_epoch * fc.epochs;
  const long long lr_span = std::max<long long>(total_steps - 1, 1);

  ClassifierModel best;
  best.best_val_f1 = -1.0;
  int since_improved = 0;
  long long step = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < fc.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t cursor = 0; cursor < order.size();) {
      const size_t end = std::min(cursor + static_cast<size_t>(fc.batch), order.size());
      std::vector<EncodedSequence> seqs;
      std::vector<int> labels;
      for (size_t i = cursor; i < end; ++i) {
        seqs.push_back(train_seqs[order[i]]);
        labels.push_back(train[order[i]].label);
      }
      cursor = end;

      model.params.zero_grads();
      model.head_w->zero_grad();
      model.head_b->zero_grad();
      Graph g;
      const TensorPtr loss = g.cross_entropy(
          cls_logits(g, model.params, cfg, seqs, model.head_w, model.head_b),
          labels);
      if (!std::isfinite(loss->item()))
        throw NumericError("classify", "non-finite fine-tuning loss");
      g.backward(loss);
      pipeline::adamw_step(plist, opt, pipeline::linear_lr(step, lr_span, fc.lr),
                           ocfg);
      ++step;
    }

    // Early stopping on validation macro-F1, one eval per epoch.
    Graph g(/*recording=*/false);
    const TensorPtr logits =
        cls_logits(g, model.params, cfg, val_seqs, model.head_w, model.head_b);
    const double f1 = macro_f1(val_gold, argmax_rows(*logits), num_classes);
    model.epochs_run = epoch + 1;
    if (f1 > best.best_val_f1) {
      best.params = model.params.clone();
      best.head_w = numcore::make_tensor(model.head_w->shape, model.head_w->value, true);
      best.head_b = numcore::make_tensor(model.head_b->shape, model.head_b->value, true);
      best.best_val_f1 = f1;
      best.epochs_run = model.epochs_run;
      since_improved = 0;
    } else if (++since_improved >= fc.patience) {
      break;
    }
  }
  return best;
}

std::vector<int> classify(const ClassifierModel& model,
                          const encoder::ModelConfig& cfg,
                          const tokenizer::Vocab& vocab,
                          const std::vector<std::string>& texts, int max_len) {
  std::vector<EncodedSequence> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(tokenizer::encode(t, vocab, max_len));
  Graph g(/*recording=*/false);
  const TensorPtr logits =
      cls_logits(g, model.params, cfg, seqs, model.head_w, model.head_b);
  return argmax_rows(*logits);
}

TaggerModel finetune_tagger(const encoder::Parameters& init,
                            const encoder::ModelConfig& cfg,
                            const tokenizer::Vocab& vocab,
                            const std::vector<TaggedSentence>& train,
                            const std::vector<TaggedSentence>& val,
                            int num_tags, const FinetuneConfig& fc) {
  if (train.empty() || val.empty()) throw DataError("finetune_tagger: empty split");
  if (num_tags < 2) throw DataError("finetune_tagger: tagset must be >= 2");
  auto validate = [&](const std::vector<TaggedSentence>& split) {
    for (const auto& s : split) {
      if (s.tokens.size() != s.tags.size())
        throw DataError("finetune_tagger: tokens/tags length mismatch");
      for (int t : s.tags)
        if (t < 0 || t >= num_tags)
          throw DataError("finetune_tagger: tag outside tagset");
    }
  };
  validate(train);
  validate(val);
  if (fc.max_len > cfg.max_positions)
    throw DataError("finetune_tagger: max_len exceeds model positions");

  Rng rng(fc.seed);
  TaggerModel model;
  model.params = init.clone();
  {
    std::vector<double> w(static_cast<size_t>(cfg.hidden) * num_tags);
    for (auto& x : w) x = rng.gaussian() * 0.02;
    model.head_w = numcore::make_tensor({cfg.hidden, num_tags}, std::move(w), true);
    model.head_b = numcore::make_tensor(
        {num_tags}, std::vector<double>(static_cast<size_t>(num_tags), 0.0), true);
  }

  std::vector<TaggedEncoding> train_enc, val_enc;
  for (const auto& s : train) train_enc.push_back(encode_tagged(s, vocab, fc.max_len));
  for (const auto& s : val) val_enc.push_back(encode_tagged(s, vocab, fc.max_len));

  std::vector<TensorPtr> plist = model.params.all();
  plist.push_back(model.head_w);
  plist.push_back(model.head_b);
  pipeline::OptimizerState opt = pipeline::OptimizerState::init(plist);
  const pipeline::TrainConfig ocfg = optimizer_config(fc);

  const long long steps_per_epoch =
      (static_cast<long long>(train.size()) + fc.batch - 1) / fc.batch;
  const long long total_steps = steps_per_epoch * fc.epochs;
  const long long lr_span = std::max<long long>(total_steps - 1, 1);

  auto position_logits = [&](Graph& g, const encoder::Parameters& p,
                             const std::vector<const TaggedEncoding*>& batch,
                             std::vector<int>& labels_out) {
    std::vector<EncodedSequence> seqs;
    for (const auto* e : batch) seqs.push_back(e->seq);
    const encoder::HiddenStates hs = encoder::forward(g, p, cfg, seqs);
    std::vector<TensorPtr> parts;
    for (size_t b = 0; b < batch.size(); ++b) {
      const TensorPtr h = hs.layers[static_cast<size_t>(cfg.layers)][b];
      parts.push_back(h);
      for (int i = 0; i < h->rows(); ++i)
        labels_out.push_back(batch[b]->labels[static_cast<size_t>(i)]);
    }
    return g.add_rowvec(g.matmul(g.concat_rows(parts), model.head_w),
                        model.head_b);
  };

  auto val_f1 = [&]() {
    std::vector<int> gold, pred;
    for (const auto& e : val_enc) {
      Graph g(/*recording=*/false);
      std::vector<int> labels;
      const TensorPtr logits = position_logits(g, model.params, {&e}, labels);
      const std::vector<int> rows = argmax_rows(*logits);
      for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != tokenizer::kIgnoreId) {
          gold.push_back(labels[i]);
          pred.push_back(rows[i]);
        }
    }
    return macro_f1(gold, pred, num_tags);
  };

  TaggerModel best;
  best.best_val_f1 = -1.0;
  int since_improved = 0;
  long long step = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < fc.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t cursor = 0; cursor < order.size();) {
      const size_t end = std::min(cursor + static_cast<size_t>(fc.batch), order.size());
      std::vector<const TaggedEncoding*> batch;
      for (size_t i = cursor; i < end; ++i) batch.push_back(&train_enc[order[i]]);
      cursor = end;

      model.params.zero_grads();
      model.head_w->zero_grad();
      model.head_b->zero_grad();
      Graph g;
      std::vector<int> labels;
      const TensorPtr logits = position_logits(g, model.params, batch, labels);
      const TensorPtr loss = g.cross_entropy(logits, labels);
      if (!std::isfinite(loss->item()))
        throw NumericError("tag", "non-finite fine-tuning loss");
      g.backward(loss);
      pipeline::adamw_step(plist, opt, pipeline::linear_lr(step, lr_span, fc.lr),
                           ocfg);
      ++step;
    }

    const double f1 = val_f1();
    model.epochs_run = epoch + 1;
    if (f1 > best.best_val_f1) {
      best.params = model.params.clone();
      best.head_w = numcore::make_tensor(model.head_w->shape, model.head_w->value, true);
      best.head_b = numcore::make_tensor(model.head_b->shape, model.head_b->value, true);
      best.best_val_f1 = f1;
      best.epochs_run = model.epochs_run;
      since_improved = 0;
    } else if (++since_improved >= fc.patience) {
      break;
    }
  }
  return best;
}

std::vector<std::vector<int>> tag_sentences(
    const TaggerModel& model, const encoder::ModelConfig& cfg,
    const tokenizer::Vocab& vocab,
    const std::vector<TaggedSentence>& sentences, int max_len) {
  std::vector<std::vector<int>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    const TaggedEncoding e = encode_tagged(s, vocab, max_len);
    Graph g(/*recording=*/false);
    const encoder::HiddenStates hs = encoder::forward(g, model.params, cfg, {e.seq});
    const TensorPtr h = hs.layers[static_cast<size_t>(cfg.layers)][0];
    const TensorPtr logits =
        g.add_rowvec(g.matmul(h, model.head_w), model.head_b);
    const std::vector<int> rows = argmax_rows(*logits);
    std::vector<int> preds;
    for (int pos : e.word_positions)
      if (pos < static_cast<int>(rows.size()))
        preds.push_back(rows[static_cast<size_t>(pos)]);
    out.push_back(std::move(preds));
  }
  return out;
}

size_t vocab_coverage(const std::vector<std::string>& corpus_paths,
                      const tokenizer::Vocab& vocab) {
  std::set<int> seen;
  for (const std::string& path : corpus_paths)
    for (const std::string& line : read_lines(path))
      for (int id : tokenizer::tokenize_line(line, vocab))
        if (!vocab.is_special(id)) seen.insert(id);
  return seen.size();
}

int LabelMap::id_of(const std::string& name, bool create) {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  if (!create) throw DataError("label outside the known set: " + name);
  names_.push_back(name);
  return static_cast<int>(names_.size()) - 1;
}

std::vector<LabeledExample> load_labeled_tsv(const std::string& path,
                                             LabelMap& labels, bool create) {
  std::vector<LabeledExample> out;
  const std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i][0] == '#') continue;
    const size_t tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(i + 1) +
                      ": expected label<TAB>text");
    out.push_back(
        {lines[i].substr(tab + 1), labels.id_of(lines[i].substr(0, tab), create)});
  }
  return out;
}

std::vector<TaggedSentence> load_conll(const std::string& path, LabelMap& tags,
                                       bool create) {
  std::vector<TaggedSentence> out;
  TaggedSentence current;
  auto flush = [&] {
    if (!current.tokens.empty()) {
      out.push_back(std::move(current));
      current = TaggedSentence{};
    }
  };
  const std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      flush();
      continue;
    }
    if (lines[i][0] == '#') continue;
    const size_t tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(i + 1) +
                      ": expected token<TAB>tag");
    current.tokens.push_back(lines[i].substr(0, tab));
    current.tags.push_back(tags.id_of(lines[i].substr(tab + 1), create));
  }
  flush();
  return out;
}

std::string MetricReport::to_csv() const {
  std::string out = "combo,task,source,target,score\n";
  for (const auto& e : entries)
    out += e.combo + "," + e.task + "," + e.source + "," + e.target + "," +
           format_double(e.score) + "\n";
  return out;
}

std::string MetricReport::to_table() const {
  std::vector<std::string> combos, columns;
  for (const auto& e : entries) {
    if (std::find(combos.begin(), combos.end(), e.combo) == combos.end())
      combos.push_back(e.combo);
    const std::string col = e.task + ":" + e.source + ">" + e.target;
    if (std::find(columns.begin(), columns.end(), col) == columns.end())
      columns.push_back(col);
  }
  auto score_of = [&](const std::string& combo, const std::string& col) {
    for (const auto& e : entries)
      if (e.combo == combo && e.task + ":" + e.source + ">" + e.target == col) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.1f", e.score * 100.0);
        return std::string(buf);
      }
    return std::string("-");
  };

  size_t name_w = 9;
  for (const auto& c : combos) name_w = std::max(name_w, c.size());
  std::vector<size_t> col_w;
  for (const auto& c : columns) col_w.push_back(std::max<size_t>(c.size(), 6));

  std::string out(name_w, ' ');
  for (size_t j = 0; j < columns.size(); ++j) {
    out += "  ";
    out += std::string(col_w[j] - columns[j].size(), ' ') + columns[j];
  }
  out += '\n';
  for (const auto& combo : combos) {
    out += combo + std::string(name_w - combo.size(), ' ');
    for (size_t j = 0; j < columns.size(); ++j) {
      const std::string s = score_of(combo, columns[j]);
      out += "  " + std::string(col_w[j] > s.size() ? col_w[j] - s.size() : 0, ' ') + s;
    }
    out += '\n';
  }
  return out;
}

MetricReport ablation_report(
    const std::vector<std::pair<std::string, std::string>>& combo_checkpoints,
    const tokenizer::Vocab& vocab, const AblationTasks& tasks, int jobs) {
  if (combo_checkpoints.empty()) throw DataError("ablation_report: no checkpoints");
  if (tasks.retrieval_pairs == nullptr)
    throw DataError("ablation_report: retrieval pairs required");

  MetricReport report;
  report.seeds = tasks.seeds;
  std::vector<std::vector<MetricReport::Entry>> per_combo(combo_checkpoints.size());

  auto eval_one = [&](size_t idx) {
    const auto& [combo, dir] = combo_checkpoints[idx];
    const encoder::Checkpoint ck = encoder::load_checkpoint(dir);
    std::vector<EncodedSequence> orig, latn;
    for (const auto& [o, l] : tasks.retrieval_pairs->pairs) {
      orig.push_back(o);
      latn.push_back(l);
    }
    const TensorPtr src = sentence_embeddings(ck.params, ck.config, orig,
                                              ck.config.pool_layer);
    const TensorPtr tgt = sentence_embeddings(ck.params, ck.config, latn,
                                              ck.config.pool_layer);
    const RetrievalResult r = retrieval_topk(*src, *tgt, tasks.k);
    per_combo[idx].push_back({combo, "retrieval", tasks.source_label,
                              tasks.target_label, r.accuracy});

    if (tasks.cls_train != nullptr) {
      std::vector<int> gold;
      std::vector<std::string> texts;
      for (const auto& ex : *tasks.cls_test) {
        gold.push_back(ex.label);
        texts.push_back(ex.text);
      }
      double sum = 0.0;
      for (uint64_t seed : tasks.seeds) {
        FinetuneConfig fc = tasks.cls_config;
        fc.seed = seed;
        const ClassifierModel m =
            finetune_classifier(ck.params, ck.config, vocab, *tasks.cls_train,
                                *tasks.cls_val, tasks.cls_classes, fc);
        const std::vector<int> pred =
            classify(m, ck.config, vocab, texts, fc.max_len);
        sum += macro_f1(gold, pred, tasks.cls_classes);
      }
      per_combo[idx].push_back({combo, "classify", tasks.source_label,
                                tasks.target_label,
                                sum / static_cast<double>(tasks.seeds.size())});
    }
  };

  if (jobs <= 1 || combo_checkpoints.size() == 1) {
    for (size_t i = 0; i < combo_checkpoints.size(); ++i) eval_one(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    const int n_threads =
        std::min<int>(jobs, static_cast<int>(combo_checkpoints.size()));
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < combo_checkpoints.size();
             i = next.fetch_add(1))
          eval_one(i);
      });
    for (auto& th : pool) th.join();
  }

  for (auto& entries : per_combo)
    for (auto& e : entries) report.entries.push_back(std::move(e));
  return report;
}

}  // namespace xlit::evalsuite

#include <cmath>

#include "doctest.h"
#include "testutil.hpp"
#include "xlit/evalsuite.hpp"
#include "xlit/pipeline.hpp"

using namespace xlit;
using namespace xlit::evalsuite;
using numcore::TensorPtr;
using tokenizer::EncodedSequence;
using tokenizer::Vocab;
using testutil::TempDir;

namespace {

Vocab toy_vocab() {
  TempDir tmp("vocab");
  testutil::write_file(tmp.file("c.txt"),
                       "aa bb cc dd aa bb cc dd aa bb\naa cc bb dd\n");
  return Vocab::train({tmp.file("c.txt")}, 32, 0);
}

encoder::ModelConfig tiny_config() {
  encoder::ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 16;
  cfg.heads = 2;
  cfg.ffn = 32;
  cfg.vocab = 32;
  cfg.max_positions = 32;
  cfg.pool_layer = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("evalsuite") {

TEST_CASE("sentence embeddings match mean_pool row by row") {
  const Vocab vocab = toy_vocab();
  const encoder::ModelConfig cfg = tiny_config();
  const encoder::Parameters p = encoder::init_parameters(cfg, 3);
  std::vector<EncodedSequence> seqs = {
      tokenizer::encode("aa bb", vocab, 16),
      tokenizer::encode("cc dd aa", vocab, 16),
      tokenizer::encode("aa bb", vocab, 16),
  };
  const TensorPtr emb = sentence_embeddings(p, cfg, seqs, cfg.pool_layer);
  CHECK(emb->rows() == 3);
  CHECK(emb->cols() == cfg.hidden);

  // Identical sentences embed identically.
  for (int j = 0; j < cfg.hidden; ++j) CHECK(emb->at(0, j) == emb->at(2, j));

  // Batched rows equal per-sentence pooling.
  numcore::Graph g(/*recording=*/false);
  const encoder::HiddenStates hs = encoder::forward(g, p, cfg, {seqs[1]});
  const TensorPtr pooled = encoder::mean_pool(
      g, hs.layers[static_cast<size_t>(cfg.pool_layer)][0], seqs[1]);
  for (int j = 0; j < cfg.hidden; ++j)
    CHECK(emb->at(1, j) == pooled->value[static_cast<size_t>(j)]);
}

TEST_CASE("self-retrieval is perfect for any k") {
  Rng rng(77);
  auto m = numcore::make_zeros({6, 4});
  for (auto& v : m->value) v = rng.gaussian();
  for (int k : {1, 3, 10}) {
    const RetrievalResult r = retrieval_topk(*m, *m, k);
    CHECK(r.accuracy == 1.0);
    CHECK(r.queries == 6);
  }
}

TEST_CASE("three-row case matches brute-force cosine enumeration") {
  // Source and target rows are 2-d; cosines depend only on angle.
  auto src = numcore::make_tensor({3, 2}, {1, 0, 0, 1, 1, 1});
  auto tgt = numcore::make_tensor({3, 2}, {0.9, 0.1, -0.5, 1.0, 2, 2});

  // Brute force at k=1:
  //   query 0 (1,0):   cos with t0=0.9939.., t1=-0.4472.., t2=0.7071 -> t0, hit
  //   query 1 (0,1):   cos 0.1104, 0.8944, 0.7071 -> t1, hit
  //   query 2 (1,1):   cos 0.7809, 0.3162, 1.0    -> t2, hit
  const RetrievalResult r1 = retrieval_topk(*src, *tgt, 1);
  CHECK(r1.accuracy == 1.0);

  // Swap target rows 0 and 2: gold cosines drop to second place for query 0.
  auto tgt2 = numcore::make_tensor({3, 2}, {2, 2, -0.5, 1.0, 0.9, 0.1});
  const RetrievalResult r2 = retrieval_topk(*src, *tgt2, 1);
  // query 0: best is t2 (0.9939) not gold t0 (0.7071) -> miss
  // query 1: best is t1 (0.8944) -> hit
  // query 2: best is t0 (1.0) not gold t2 (0.7809) -> miss
  CHECK(r2.accuracy == doctest::Approx(1.0 / 3).epsilon(1e-12));
  const RetrievalResult r2b = retrieval_topk(*src, *tgt2, 2);
  // at k=2 queries 0 and 2 move into the top two
  CHECK(r2b.accuracy == 1.0);
}

TEST_CASE("k covering all rows retrieves everything") {
  Rng rng(5);
  auto src = numcore::make_zeros({4, 3});
  auto tgt = numcore::make_zeros({4, 3});
  for (auto& v : src->value) v = rng.gaussian();
  for (auto& v : tgt->value) v = rng.gaussian();
  CHECK(retrieval_topk(*src, *tgt, 4).accuracy == 1.0);
  CHECK(retrieval_topk(*src, *tgt, 99).accuracy == 1.0);
}

TEST_CASE("retrieval accuracy is monotone in k") {
  Rng rng(31);
  auto src = numcore::make_zeros({12, 5});
  auto tgt = numcore::make_zeros({12, 5});
  for (auto& v : src->value) v = rng.gaussian();
  for (auto& v : tgt->value) v = rng.gaussian();
  double prev = 0.0;
  for (int k = 1; k <= 12; ++k) {
    const double acc = retrieval_topk(*src, *tgt, k).accuracy;
    CHECK(acc >= prev);
    prev = acc;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("retrieval is invariant under a joint permutation") {
  Rng rng(13);
  const int n = 8, d = 3;
  auto src = numcore::make_zeros({n, d});
  auto tgt = numcore::make_zeros({n, d});
  for (auto& v : src->value) v = rng.gaussian();
  for (auto& v : tgt->value) v = rng.gaussian();
  const std::vector<int> perm = {5, 2, 7, 0, 3, 6, 1, 4};
  auto ps = numcore::make_zeros({n, d});
  auto pt = numcore::make_zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      ps->at(i, j) = src->at(perm[static_cast<size_t>(i)], j);
      pt->at(i, j) = tgt->at(perm[static_cast<size_t>(i)], j);
    }
  for (int k : {1, 3}) {
    CHECK(retrieval_topk(*src, *tgt, k).accuracy ==
          retrieval_topk(*ps, *pt, k).accuracy);
  }
}

TEST_CASE("zero-norm rows lose against everything") {
  auto src = numcore::make_tensor({2, 2}, {1, 0, 0, 0});  // query 1 is zero
  auto tgt = numcore::make_tensor({2, 2}, {1, 0, 0, 1});
  const RetrievalResult r = retrieval_topk(*src, *tgt, 1);
  CHECK(r.hits[0] == 1);
  CHECK(r.hits[1] == 0);  // all -inf, tie broken toward index 0
}

TEST_CASE("macro F1 worked examples") {
  CHECK(macro_f1({0, 1, 2, 0}, {0, 1, 2, 0}, 3) == 1.0);
  // gold [a,a,b,b], pred [a,b,a,b]: F1_a = 0.5, F1_b = 0.5.
  CHECK(macro_f1({0, 0, 1, 1}, {0, 1, 0, 1}, 2) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // all-one-class predictions against a balanced 2-class gold: (2/3 + 0)/2.
  CHECK(macro_f1({0, 0, 1, 1}, {0, 0, 0, 0}, 2) ==
        doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("macro F1 invariances and errors") {
  const std::vector<int> gold = {0, 1, 1, 2, 0};
  const std::vector<int> pred = {0, 2, 1, 2, 1};
  // Relabeling classes by a permutation does not change the score.
  auto relabel = [](const std::vector<int>& v, const std::vector<int>& map) {
    std::vector<int> out;
    for (int x : v) out.push_back(map[static_cast<size_t>(x)]);
    return out;
  };
  const std::vector<int> map = {2, 0, 1};
  CHECK(macro_f1(gold, pred, 3) ==
        doctest::Approx(macro_f1(relabel(gold, map), relabel(pred, map), 3))
            .epsilon(1e-12));
  // Sample order does not matter.
  const std::vector<int> gold_r = {0, 2, 1, 1, 0};
  const std::vector<int> pred_r = {1, 2, 1, 2, 0};
  CHECK(macro_f1(gold, pred, 3) ==
        doctest::Approx(macro_f1(gold_r, pred_r, 3)).epsilon(1e-12));
  // Classes absent from both sides are excluded from the average.
  CHECK(macro_f1({0, 0}, {0, 0}, 5) == 1.0);
  CHECK_THROWS_AS(macro_f1({0}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(macro_f1({0, 4}, {0, 1}, 3), DataError);
}

TEST_CASE("classifier fine-tuning separates a toy task") {
  const Vocab vocab = toy_vocab();
  const encoder::ModelConfig cfg = tiny_config();
  const encoder::Parameters init = encoder::init_parameters(cfg, 9);

  std::vector<LabeledExample> train = {
      {"aa aa aa", 0}, {"aa aa", 0},    {"aa aa aa aa", 0}, {"aa", 0},
      {"bb bb bb", 1}, {"bb bb", 1},    {"bb bb bb bb", 1}, {"bb", 1},
      {"aa aa bb", 0}, {"bb bb aa", 1},
  };
  FinetuneConfig fc;
  fc.lr = 2e-3;
  fc.epochs = 40;
  fc.batch = 5;
  fc.max_len = 16;
  fc.patience = 40;  // run to convergence on this toy set

  const ClassifierModel model =
      finetune_classifier(init, cfg, vocab, train, train, 2, fc);
  std::vector<std::string> texts;
  std::vector<int> gold;
  for (const auto& ex : train) {
    texts.push_back(ex.text);
    gold.push_back(ex.label);
  }
  const std::vector<int> pred = classify(model, cfg, vocab, texts, fc.max_len);
  CHECK(macro_f1(gold, pred, 2) == 1.0);
  CHECK(model.best_val_f1 == 1.0);
}

TEST_CASE("classifier rejects degenerate inputs") {
  const Vocab vocab = toy_vocab();
  const encoder::ModelConfig cfg = tiny_config();
  const encoder::Parameters init = encoder::init_parameters(cfg, 9);
  FinetuneConfig fc;
  const std::vector<LabeledExample> single = {{"aa", 0}, {"aa aa", 0}};
  CHECK_THROWS_AS(finetune_classifier(init, cfg, vocab, single, single, 2, fc),
                  DataError);
  const std::vector<LabeledExample> empty;
  const std::vector<LabeledExample> ok = {{"aa", 0}, {"bb", 1}};
  CHECK_THROWS_AS(finetune_classifier(init, cfg, vocab, empty, ok, 2, fc),
                  DataError);
  CHECK_THROWS_AS(finetune_classifier(init, cfg, vocab, ok, ok, 1, fc),
                  DataError);
}

TEST_CASE("tagger learns a copy task") {
  const Vocab vocab = toy_vocab();
  const encoder::ModelConfig cfg = tiny_config();
  const encoder::Parameters init = encoder::init_parameters(cfg, 15);

  // Tag is a pure function of the word: learnable from embeddings alone.
  auto tag_of = [](const std::string& w) { return w == "aa" ? 0 : (w == "bb" ? 1 : 2); };
  Rng rng(21);
  std::vector<TaggedSentence> train;
  const std::vector<std::string> words = {"aa", "bb", "cc"};
  for (int i = 0; i < 24; ++i) {
    TaggedSentence s;
    const int len = 2 + static_cast<int>(rng.uniform_int(4));
    for (int w = 0; w < len; ++w) {
      const std::string& word = words[rng.uniform_int(3)];
      s.tokens.push_back(word);
      s.tags.push_back(tag_of(word));
    }
    train.push_back(std::move(s));
  }

  FinetuneConfig fc;
  fc.lr = 2e-3;
  fc.epochs = 30;
  fc.batch = 8;
  fc.max_len = 24;
  fc.patience = 30;

  const TaggerModel model =
      finetune_tagger(init, cfg, vocab, train, train, 3, fc);
  CHECK(model.best_val_f1 >= 0.99);

  // Deterministic given the seed.
  const TaggerModel again =
      finetune_tagger(init, cfg, vocab, train, train, 3, fc);
  CHECK(again.best_val_f1 == model.best_val_f1);
  CHECK(again.head_w->value == model.head_w->value);

  const std::vector<std::vector<int>> preds =
      tag_sentences(model, cfg, vocab, train, fc.max_len);
  REQUIRE(preds.size() == train.size());
  CHECK(preds[0].size() == train[0].tokens.size());
}

TEST_CASE("tagger rejects tags outside the tagset") {
  const Vocab vocab = toy_vocab();
  const encoder::ModelConfig cfg = tiny_config();
  const encoder::Parameters init = encoder::init_parameters(cfg, 1);
  FinetuneConfig fc;
  std::vector<TaggedSentence> bad = {{{"aa"}, {5}}};
  CHECK_THROWS_AS(finetune_tagger(init, cfg, vocab, bad, bad, 3, fc),
                  DataError);
}

TEST_CASE("vocab coverage counts distinct non-special ids") {
  TempDir tmp("cov");
  testutil::write_file(tmp.file("c.txt"), "a b a\n");
  const Vocab v = Vocab::train({tmp.file("c.txt")}, 16, 0);
  testutil::write_file(tmp.file("q.txt"), "a b a\n");
  CHECK(vocab_coverage({tmp.file("q.txt")}, v) == 3);  // "a", " b", " a"

  // A corpus where two scripts collapse to one: the romanized rendition
  // reuses only the Latin-side token inventory.
  Rng rng(3);
  const std::vector<std::string> latin = testutil::synthetic_sentences(40, rng);
  std::string mixed, romanized;
  for (size_t i = 0; i < latin.size(); ++i) {
    const std::string line =
        i % 2 == 0 ? latin[i] : testutil::cipher_encode(latin[i]);
    mixed += line + "\n";
    romanized += latin[i] + "\n";
  }
  testutil::write_file(tmp.file("mixed.txt"), mixed);
  testutil::write_file(tmp.file("rom.txt"), romanized);
  const Vocab big = Vocab::train({tmp.file("mixed.txt"), tmp.file("rom.txt")},
                                 256, 0);
  const size_t original_count = vocab_coverage({tmp.file("mixed.txt")}, big);
  const size_t romanized_count = vocab_coverage({tmp.file("rom.txt")}, big);
  CHECK(romanized_count < original_count);
  // Subset sanity: the romanized inventory cannot exceed the union.
  const size_t union_count = vocab_coverage(
      {tmp.file("mixed.txt"), tmp.file("rom.txt")}, big);
  CHECK(romanized_count <= union_count);
  CHECK(original_count <= union_count);
}

TEST_CASE("ablation report structure mirrors the grid") {
  TempDir tmp("ablate");
  const Vocab vocab = toy_vocab();
  const encoder::ModelConfig cfg = tiny_config();

  // Five checkpoints (base + four combinations) from differently seeded
  // random models; structure and score plumbing are what matter here.
  const std::vector<std::string> combos = {"base", "mlm", "mlm+seq", "mlm+tlm",
                                           "mlm+seq+tlm"};
  std::vector<std::pair<std::string, std::string>> ckpts;
  for (size_t i = 0; i < combos.size(); ++i) {
    const encoder::Parameters p =
        encoder::init_parameters(cfg, 100 + static_cast<uint64_t>(i));
    const std::string dir = tmp.file("ck_" + std::to_string(i));
    encoder::save_checkpoint(dir, p, cfg, static_cast<long long>(i));
    ckpts.emplace_back(combos[i], dir);
  }

  objectives::PairBatch pairs;
  for (const std::string text : {"aa bb", "cc dd", "aa cc", "bb dd", "dd aa"})
    pairs.pairs.emplace_back(tokenizer::encode(text, vocab, 16),
                             tokenizer::encode(text, vocab, 16));

  AblationTasks tasks;
  tasks.retrieval_pairs = &pairs;
  tasks.k = 2;

  const MetricReport report = ablation_report(ckpts, vocab, tasks, 2);
  REQUIRE(report.entries.size() == 5);
  for (size_t i = 0; i < combos.size(); ++i) {
    CHECK(report.entries[i].combo == combos[i]);
    CHECK(report.entries[i].task == "retrieval");

    // The retrieval column reproduces retrieval_topk directly.
    const encoder::Checkpoint ck = encoder::load_checkpoint(ckpts[i].second);
    std::vector<EncodedSequence> orig, latn;
    for (const auto& [o, l] : pairs.pairs) {
      orig.push_back(o);
      latn.push_back(l);
    }
    const TensorPtr src =
        sentence_embeddings(ck.params, ck.config, orig, ck.config.pool_layer);
    const TensorPtr tgt =
        sentence_embeddings(ck.params, ck.config, latn, ck.config.pool_layer);
    CHECK(report.entries[i].score ==
          retrieval_topk(*src, *tgt, tasks.k).accuracy);
  }

  const std::string csv = report.to_csv();
  CHECK(csv.find("combo,task,source,target,score") == 0);
  const std::string table = report.to_table();
  CHECK(table.find("mlm+seq+tlm") != std::string::npos);
  CHECK(table.find("retrieval:orig>latn") != std::string::npos);
}

}  // TEST_SUITE

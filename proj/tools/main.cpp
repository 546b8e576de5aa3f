#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xlit/encoder.hpp"
#include "xlit/evalsuite.hpp"
#include "xlit/io.hpp"
#include "xlit/numcore.hpp"
#include "xlit/objectives.hpp"
#include "xlit/pipeline.hpp"
#include "xlit/rng.hpp"
#include "xlit/tokenizer.hpp"
#include "xlit/translit.hpp"

namespace {

using namespace xlit;

// Every run logs its resolved flags and seed so reruns are reproducible.
void echo_config(const std::string& verb, const KvPairs& kv) {
  std::string line = "[xlit] " + verb;
  for (const auto& [k, v] : kv) line += " " + k + "=" + v;
  std::fprintf(stderr, "%s\n", line.c_str());
}

struct ModelFlags {
  int layers = 4;
  int hidden = 64;
  int heads = 4;
  int ffn = 256;
  int max_positions = 0;  // 0: max(64, max_len)
  int pool_layer = 0;     // 0: derived from layers

  void attach(CLI::App* cmd) {
    cmd->add_option("--layers", layers, "Encoder blocks");
    cmd->add_option("--hidden", hidden, "Hidden width");
    cmd->add_option("--heads", heads, "Attention heads");
    cmd->add_option("--ffn", ffn, "Feed-forward width");
    cmd->add_option("--max-positions", max_positions,
                    "Position table size (0: max(64, max_len))");
    cmd->add_option("--pool-layer", pool_layer,
                    "Mean-pooling layer (0: round(2L/3))");
  }

  encoder::ModelConfig resolve(int vocab_size, int max_len) const {
    encoder::ModelConfig cfg;
    cfg.layers = layers;
    cfg.hidden = hidden;
    cfg.heads = heads;
    cfg.ffn = ffn;
    cfg.vocab = vocab_size;
    cfg.max_positions =
        max_positions > 0 ? max_positions : std::max(64, max_len);
    cfg.pool_layer = pool_layer > 0
                         ? pool_layer
                         : encoder::ModelConfig::default_pool_layer(layers);
    cfg.validate();
    return cfg;
  }
};

struct TrainFlags {
  std::string profile = "desk";
  std::string config_file;
  double lr = -1, mask_prob = -1, tau = -1, weight_decay = -1;
  int batch = -1, accum = -1, epochs = -1, max_len = -1, ckpt_every = -1;
  uint64_t seed = 42;

  void attach(CLI::App* cmd) {
    cmd->add_option("--profile", profile, "Config profile: desk|paper");
    cmd->add_option("--config", config_file, "Key=value train config file");
    cmd->add_option("--lr", lr, "Initial learning rate (profile default)");
    cmd->add_option("--batch", batch, "Pairs per micro-batch (profile default)");
    cmd->add_option("--accum", accum, "Gradient accumulation steps (profile default)");
    cmd->add_option("--epochs", epochs, "Training epochs (profile default)");
    cmd->add_option("--max-len", max_len, "Maximum sequence length (profile default)");
    cmd->add_option("--ckpt-every", ckpt_every,
                    "Checkpoint interval in steps (profile default)");
    cmd->add_option("--mask-prob", mask_prob, "MLM masking probability (profile default)");
    cmd->add_option("--tau", tau, "Contrastive temperature (profile default)");
    cmd->add_option("--weight-decay", weight_decay, "AdamW weight decay (profile default)");
    cmd->add_option("--seed", seed, "Random seed");
  }

  pipeline::TrainConfig resolve() const {
    pipeline::TrainConfig tc = pipeline::TrainConfig::profile(profile);
    if (!config_file.empty()) tc.apply_kv(read_kv_file(config_file), config_file);
    if (lr > 0) tc.lr0 = lr;
    if (batch > 0) tc.batch = batch;
    if (accum > 0) tc.grad_accum = accum;
    if (epochs > 0) tc.epochs = epochs;
    if (max_len > 0) tc.max_len = max_len;
    if (ckpt_every > 0) tc.checkpoint_every = ckpt_every;
    if (mask_prob >= 0) tc.mask_prob = mask_prob;
    if (tau > 0) tc.tau = tau;
    if (weight_decay >= 0) tc.weight_decay = weight_decay;
    tc.seed = seed;
    tc.validate();
    return tc;
  }
};

struct FinetuneFlags {
  double lr = 1e-3;
  int epochs = 40;
  int batch = 32;
  int max_len = 64;
  int patience = 5;
  uint64_t seed = 42;

  void attach(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "Fine-tuning learning rate");
    cmd->add_option("--epochs", epochs, "Fine-tuning epochs");
    cmd->add_option("--batch", batch, "Batch size");
    cmd->add_option("--max-len", max_len, "Maximum sequence length");
    cmd->add_option("--patience", patience, "Early-stopping patience (evals)");
    cmd->add_option("--seed", seed, "Random seed");
  }

  evalsuite::FinetuneConfig resolve() const {
    evalsuite::FinetuneConfig fc;
    fc.lr = lr;
    fc.epochs = epochs;
    fc.batch = batch;
    fc.max_len = max_len;
    fc.patience = patience;
    fc.seed = seed;
    return fc;
  }

  KvPairs echo() const {
    return {{"lr", format_double(lr)},
            {"epochs", std::to_string(epochs)},
            {"batch", std::to_string(batch)},
            {"max_len", std::to_string(max_len)},
            {"patience", std::to_string(patience)},
            {"seed", std::to_string(seed)}};
  }
};

int cmd_gradcheck(int pairs, uint64_t seed, double h, int64_t coords,
                  double init_std, const ModelFlags& mf) {
  const int max_len = 16;
  const encoder::ModelConfig cfg = mf.resolve(/*vocab_size=*/64, max_len);
  encoder::Parameters params = encoder::init_parameters(cfg, seed);
  // Audit at a non-degenerate point: the training-time 0.02 init leaves the
  // attention path with gradients near the finite-difference noise floor.
  if (init_std > 0) {
    const double scale = init_std / 0.02;
    for (const auto& [name, t] : params.named())
      if (name.find("ln") == std::string::npos &&
          name.find("bias") == std::string::npos)
        for (double& v : t->value) v *= scale;
  }
  Rng rng(seed);

  // Synthetic pair batch over random content ids, masked once up front so
  // the loss is a deterministic function of the parameters.
  auto random_seq = [&](int content_len) {
    tokenizer::EncodedSequence s;
    s.ids.push_back(tokenizer::kClsId);
    for (int i = 0; i < content_len; ++i)
      s.ids.push_back(tokenizer::kNumSpecials +
                      static_cast<int>(rng.uniform_int(static_cast<uint64_t>(
                          cfg.vocab - tokenizer::kNumSpecials))));
    s.ids.push_back(tokenizer::kSepId);
    const auto real = s.ids.size();
    s.ids.resize(max_len, tokenizer::kPadId);
    s.attention.assign(max_len, 0);
    s.special_flags.assign(max_len, 1);
    for (size_t i = 0; i < real; ++i) s.attention[i] = 1;
    for (size_t i = 1; i + 1 < real; ++i) s.special_flags[i] = 0;
    return s;
  };
  auto mask_manual = [&](const tokenizer::EncodedSequence& seq) {
    tokenizer::MaskedItem item;
    item.input = seq;
    item.labels.assign(seq.ids.size(), tokenizer::kIgnoreId);
    for (size_t i = 0; i < seq.ids.size(); ++i) {
      if (seq.special_flags[i] != 0 || !rng.bernoulli(0.3)) continue;
      item.labels[i] = seq.ids[i];
      const double r = rng.uniform();
      if (r < 0.8)
        item.input.ids[i] = tokenizer::kMaskId;
      else if (r < 0.9)
        item.input.ids[i] =
            static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.vocab)));
    }
    return item;
  };

  objectives::PairBatch batch;
  tokenizer::MaskedBatch orig_masked, latn_masked, tlm_masked;
  for (int i = 0; i < pairs; ++i) {
    const int len = 4 + static_cast<int>(rng.uniform_int(3));
    batch.pairs.emplace_back(random_seq(len), random_seq(len));
  }
  for (const auto& [orig, latn] : batch.pairs)
    orig_masked.push_back(mask_manual(orig));
  for (const auto& [orig, latn] : batch.pairs)
    latn_masked.push_back(mask_manual(latn));
  for (const auto& [orig, latn] : batch.pairs)
    tlm_masked.push_back(
        mask_manual(objectives::build_tlm_pair(orig, latn, max_len, rng)));

  auto loss_fn = [&] {
    numcore::Graph g;
    numcore::TensorPtr total =
        g.add(objectives::mlm_loss(g, params, cfg, orig_masked),
              objectives::mlm_loss(g, params, cfg, latn_masked));
    total = g.add(total,
                  objectives::seq_contrastive_loss(g, params, cfg, batch, 1.0));
    total = g.add(total, objectives::mlm_loss(g, params, cfg, tlm_masked));
    g.backward(total);
    return total->item();
  };
  const numcore::FiniteDiffReport r =
      numcore::finite_diff_check(loss_fn, params.all(), h, coords, seed);
  std::fprintf(stderr,
               "[xlit] worst: %s[%lld] analytic=%s central=%s\n",
               params.named()[r.worst_param].first.c_str(),
               static_cast<long long>(r.worst_coord),
               format_double(r.worst_analytic).c_str(),
               format_double(r.worst_fd).c_str());
  std::printf("coords,max_rel_err\n%lld,%s\n",
              static_cast<long long>(r.coords_checked),
              format_double(r.max_rel_err).c_str());
  return r.max_rel_err < 1e-4 ? 0 : 3;
}

int run(int argc, char** argv) {
  CLI::App app{"Transliteration-aligned toy encoder: romanization, training "
               "and zero-shot evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // --- romanize ---
  auto* romanize = app.add_subcommand("romanize", "Romanize a corpus file");
  std::string rom_rules, rom_in, rom_out;
  uint64_t rom_seed = 42;
  romanize->add_option("--rules", rom_rules, "Rule table TSV")->required();
  romanize->add_option("--in", rom_in, "Input corpus")->required();
  romanize->add_option("--out", rom_out, "Output corpus")->required();
  romanize->add_option("--seed", rom_seed, "Random seed (unused; echoed)");
  romanize->callback([&] {
    echo_config("romanize", {{"rules", rom_rules},
                             {"in", rom_in},
                             {"out", rom_out},
                             {"seed", std::to_string(rom_seed)}});
    const translit::RuleTable table = translit::load_rules(rom_rules);
    translit::RomanizeStats stats;
    const size_t n = translit::romanize_corpus(rom_in, table, rom_out, &stats);
    std::fprintf(stderr, "[xlit] lines=%zu dropped=%zu\n", n, stats.dropped);
  });

  // --- detect-script ---
  auto* detect =
      app.add_subcommand("detect-script", "Detect the majority script");
  std::string det_text, det_in;
  uint64_t det_seed = 42;
  detect->add_option("--text", det_text, "Literal text argument");
  detect->add_option("--in", det_in, "Input file, one detection per line");
  detect->add_option("--seed", det_seed, "Random seed (unused; echoed)");
  detect->callback([&] {
    echo_config("detect-script", {{"text", det_text},
                                  {"in", det_in},
                                  {"seed", std::to_string(det_seed)}});
    if (det_text.empty() == det_in.empty())
      throw DataError("detect-script: pass exactly one of --text / --in");
    if (!det_text.empty()) {
      std::printf("%s\n", translit::detect_script(det_text).code.c_str());
    } else {
      for (const std::string& line : read_lines(det_in))
        std::printf("%s\n", translit::detect_script(line).code.c_str());
    }
  });

  // --- sample ---
  auto* sample = app.add_subcommand("sample", "Sample corpus lines");
  std::string smp_in, smp_out;
  double smp_fraction = 0.1;
  long long smp_floor = 10000;
  uint64_t smp_seed = 42;
  sample->add_option("--in", smp_in, "Input corpus")->required();
  sample->add_option("--out", smp_out, "Output corpus")->required();
  sample->add_option("--fraction", smp_fraction, "Fraction to keep");
  sample->add_option("--floor", smp_floor, "Minimum number of lines");
  sample->add_option("--seed", smp_seed, "Random seed");
  sample->callback([&] {
    echo_config("sample", {{"in", smp_in},
                           {"out", smp_out},
                           {"fraction", format_double(smp_fraction)},
                           {"floor", std::to_string(smp_floor)},
                           {"seed", std::to_string(smp_seed)}});
    Rng rng(smp_seed);
    const size_t n =
        pipeline::sample_corpus(smp_in, smp_fraction, smp_floor, rng, smp_out);
    std::printf("%zu\n", n);
  });

  // --- train-vocab ---
  auto* tvocab =
      app.add_subcommand("train-vocab", "Train the shared subword vocabulary");
  std::vector<std::string> tv_corpora;
  int tv_size = 512;
  uint64_t tv_seed = 42;
  std::string tv_out;
  tvocab->add_option("--corpus", tv_corpora, "Corpus file(s)")->required();
  tvocab->add_option("--size", tv_size, "Vocabulary size");
  tvocab->add_option("--seed", tv_seed, "Random seed (reserved)");
  tvocab->add_option("--out", tv_out, "Output vocab file")->required();
  tvocab->callback([&] {
    std::string corpora;
    for (const auto& c : tv_corpora) corpora += (corpora.empty() ? "" : ",") + c;
    echo_config("train-vocab", {{"corpus", corpora},
                                {"size", std::to_string(tv_size)},
                                {"seed", std::to_string(tv_seed)},
                                {"out", tv_out}});
    const tokenizer::Vocab v =
        tokenizer::Vocab::train(tv_corpora, tv_size, tv_seed);
    v.save(tv_out);
    std::printf("%d\n", v.size());
  });

  // --- build-pairs ---
  auto* bpairs = app.add_subcommand("build-pairs",
                                    "Encode a corpus with its romanization");
  std::string bp_in, bp_rules, bp_vocab, bp_out;
  int bp_max_len = 64;
  uint64_t bp_seed = 42;
  bpairs->add_option("--in", bp_in, "Original-script corpus")->required();
  bpairs->add_option("--rules", bp_rules, "Rule table TSV")->required();
  bpairs->add_option("--vocab", bp_vocab, "Vocab file")->required();
  bpairs->add_option("--max-len", bp_max_len, "Maximum sequence length");
  bpairs->add_option("--seed", bp_seed, "Random seed (unused; echoed)");
  bpairs->add_option("--out", bp_out, "Output pairs file")->required();
  bpairs->callback([&] {
    echo_config("build-pairs", {{"in", bp_in},
                                {"rules", bp_rules},
                                {"vocab", bp_vocab},
                                {"max_len", std::to_string(bp_max_len)},
                                {"seed", std::to_string(bp_seed)},
                                {"out", bp_out}});
    const translit::RuleTable table = translit::load_rules(bp_rules);
    const tokenizer::Vocab vocab = tokenizer::Vocab::load(bp_vocab);
    size_t skipped = 0;
    const objectives::PairBatch batch =
        pipeline::build_pair_corpus(bp_in, table, vocab, bp_max_len, &skipped);
    pipeline::save_pairs(bp_out, batch, bp_max_len);
    std::fprintf(stderr, "[xlit] pairs=%d skipped_empty=%zu\n", batch.size(),
                 skipped);
    std::printf("%d\n", batch.size());
  });

  // --- train ---
  auto* train = app.add_subcommand("train", "Run the alignment training loop");
  std::string tr_pairs, tr_vocab, tr_out, tr_objectives = "full";
  TrainFlags tr_flags;
  ModelFlags tr_model;
  train->add_option("--pairs", tr_pairs, "Pairs file from build-pairs")->required();
  train->add_option("--vocab", tr_vocab, "Vocab file")->required();
  train->add_option("--out", tr_out, "Output directory")->required();
  train->add_option("--objectives", tr_objectives, "mlm|mlm+seq|mlm+tlm|full");
  tr_flags.attach(train);
  tr_model.attach(train);
  train->callback([&] {
    pipeline::TrainConfig tc = tr_flags.resolve();
    const tokenizer::Vocab vocab = tokenizer::Vocab::load(tr_vocab);
    int pairs_max_len = 0;
    const objectives::PairBatch data =
        pipeline::load_pairs(tr_pairs, &pairs_max_len);
    tc.max_len = std::min(tc.max_len, pairs_max_len);
    const encoder::ModelConfig cfg = tr_model.resolve(vocab.size(), tc.max_len);
    const objectives::Toggles toggles = objectives::Toggles::parse(tr_objectives);

    KvPairs echo = tc.to_kv();
    echo.emplace_back("objectives", toggles.str());
    for (const auto& [k, v] : cfg.to_kv()) echo.emplace_back("model." + k, v);
    echo_config("train", echo);

    encoder::Parameters params = encoder::init_parameters(cfg, tc.seed);
    const pipeline::TrainResult result =
        pipeline::train(params, cfg, data, tc, toggles, vocab, tr_out);
    std::printf("steps,%lld\nloss_log,%s\n", result.steps,
                result.loss_log_path.c_str());
    for (const auto& d : result.checkpoint_dirs)
      std::printf("checkpoint,%s\n", d.c_str());
  });

  // --- select-checkpoint ---
  auto* selckpt = app.add_subcommand("select-checkpoint",
                                     "Pick the best checkpoint by retrieval");
  std::vector<std::string> sc_ckpts;
  std::string sc_pairs;
  int sc_k = 10;
  uint64_t sc_seed = 42;
  selckpt->add_option("--ckpts", sc_ckpts, "Checkpoint directories")->required();
  selckpt->add_option("--dev-pairs", sc_pairs, "Dev pairs file")->required();
  selckpt->add_option("--k", sc_k, "Retrieval depth");
  selckpt->add_option("--seed", sc_seed, "Random seed (unused; echoed)");
  selckpt->callback([&] {
    std::string dirs;
    for (const auto& d : sc_ckpts) dirs += (dirs.empty() ? "" : ",") + d;
    echo_config("select-checkpoint", {{"ckpts", dirs},
                                      {"dev_pairs", sc_pairs},
                                      {"k", std::to_string(sc_k)},
                                      {"seed", std::to_string(sc_seed)}});
    const objectives::PairBatch dev = pipeline::load_pairs(sc_pairs);
    std::printf("%s\n",
                pipeline::select_best_checkpoint(sc_ckpts, dev, sc_k).c_str());
  });

  // --- eval-retrieval ---
  auto* evret = app.add_subcommand(
      "eval-retrieval", "Top-k retrieval accuracy on parallel pairs");
  std::string er_ckpt, er_pairs;
  int er_k = 10;
  uint64_t er_seed = 42;
  evret->add_option("--ckpt", er_ckpt, "Checkpoint directory")->required();
  evret->add_option("--pairs", er_pairs, "Pairs file")->required();
  evret->add_option("--k", er_k, "Retrieval depth");
  evret->add_option("--seed", er_seed, "Random seed (unused; echoed)");
  evret->callback([&] {
    echo_config("eval-retrieval", {{"ckpt", er_ckpt},
                                   {"pairs", er_pairs},
                                   {"k", std::to_string(er_k)},
                                   {"seed", std::to_string(er_seed)}});
    const encoder::Checkpoint ck = encoder::load_checkpoint(er_ckpt);
    const objectives::PairBatch pairs = pipeline::load_pairs(er_pairs);
    std::vector<tokenizer::EncodedSequence> orig, latn;
    for (const auto& [o, l] : pairs.pairs) {
      orig.push_back(o);
      latn.push_back(l);
    }
    const numcore::TensorPtr src = evalsuite::sentence_embeddings(
        ck.params, ck.config, orig, ck.config.pool_layer);
    const numcore::TensorPtr tgt = evalsuite::sentence_embeddings(
        ck.params, ck.config, latn, ck.config.pool_layer);
    const evalsuite::RetrievalResult r =
        evalsuite::retrieval_topk(*src, *tgt, er_k);
    std::printf("k,accuracy,queries\n%d,%s,%d\n", r.k,
                format_double(r.accuracy).c_str(), r.queries);
  });

  // --- eval-classify ---
  auto* evcls = app.add_subcommand(
      "eval-classify", "Fine-tune a classifier and score a test set");
  std::string ec_ckpt, ec_vocab, ec_train, ec_val, ec_test;
  FinetuneFlags ec_flags;
  evcls->add_option("--ckpt", ec_ckpt, "Checkpoint directory")->required();
  evcls->add_option("--vocab", ec_vocab, "Vocab file")->required();
  evcls->add_option("--train", ec_train, "label<TAB>text training set")->required();
  evcls->add_option("--val", ec_val, "Validation set")->required();
  evcls->add_option("--test", ec_test, "Test set")->required();
  ec_flags.attach(evcls);
  evcls->callback([&] {
    KvPairs echo = ec_flags.echo();
    echo.emplace_back("ckpt", ec_ckpt);
    echo_config("eval-classify", echo);
    const encoder::Checkpoint ck = encoder::load_checkpoint(ec_ckpt);
    const tokenizer::Vocab vocab = tokenizer::Vocab::load(ec_vocab);
    evalsuite::LabelMap labels;
    const auto train_set = evalsuite::load_labeled_tsv(ec_train, labels, true);
    const auto val_set = evalsuite::load_labeled_tsv(ec_val, labels, true);
    const auto test_set = evalsuite::load_labeled_tsv(ec_test, labels, true);
    const evalsuite::FinetuneConfig fc = ec_flags.resolve();
    const evalsuite::ClassifierModel model = evalsuite::finetune_classifier(
        ck.params, ck.config, vocab, train_set, val_set, labels.size(), fc);
    std::vector<std::string> texts;
    std::vector<int> gold;
    for (const auto& ex : test_set) {
      texts.push_back(ex.text);
      gold.push_back(ex.label);
    }
    const std::vector<int> pred =
        evalsuite::classify(model, ck.config, vocab, texts, fc.max_len);
    std::printf("metric,value\nval_macro_f1,%s\ntest_macro_f1,%s\n",
                format_double(model.best_val_f1).c_str(),
                format_double(evalsuite::macro_f1(gold, pred, labels.size()))
                    .c_str());
  });

  // --- eval-tag ---
  auto* evtag =
      app.add_subcommand("eval-tag", "Fine-tune a tagger and score a test set");
  std::string et_ckpt, et_vocab, et_train, et_val, et_test;
  FinetuneFlags et_flags;
  et_flags.epochs = 20;
  evtag->add_option("--ckpt", et_ckpt, "Checkpoint directory")->required();
  evtag->add_option("--vocab", et_vocab, "Vocab file")->required();
  evtag->add_option("--train", et_train, "CoNLL training set")->required();
  evtag->add_option("--val", et_val, "Validation set")->required();
  evtag->add_option("--test", et_test, "Test set")->required();
  et_flags.attach(evtag);
  evtag->callback([&] {
    KvPairs echo = et_flags.echo();
    echo.emplace_back("ckpt", et_ckpt);
    echo_config("eval-tag", echo);
    const encoder::Checkpoint ck = encoder::load_checkpoint(et_ckpt);
    const tokenizer::Vocab vocab = tokenizer::Vocab::load(et_vocab);
    evalsuite::LabelMap tags;
    const auto train_set = evalsuite::load_conll(et_train, tags, true);
    const auto val_set = evalsuite::load_conll(et_val, tags, true);
    const auto test_set = evalsuite::load_conll(et_test, tags, true);
    const evalsuite::FinetuneConfig fc = et_flags.resolve();
    const evalsuite::TaggerModel model = evalsuite::finetune_tagger(
        ck.params, ck.config, vocab, train_set, val_set, tags.size(), fc);
    const std::vector<std::vector<int>> preds = evalsuite::tag_sentences(
        model, ck.config, vocab, test_set, fc.max_len);
    std::vector<int> gold, pred;
    for (size_t s = 0; s < test_set.size(); ++s)
      for (size_t w = 0; w < preds[s].size(); ++w) {
        gold.push_back(test_set[s].tags[w]);
        pred.push_back(preds[s][w]);
      }
    std::printf("metric,value\nval_macro_f1,%s\ntest_macro_f1,%s\n",
                format_double(model.best_val_f1).c_str(),
                format_double(evalsuite::macro_f1(gold, pred, tags.size()))
                    .c_str());
  });

  // --- vocab-coverage ---
  auto* vcov = app.add_subcommand("vocab-coverage",
                                  "Count distinct token ids over corpora");
  std::string vc_vocab;
  std::vector<std::string> vc_corpora;
  uint64_t vc_seed = 42;
  vcov->add_option("--vocab", vc_vocab, "Vocab file")->required();
  vcov->add_option("--corpus", vc_corpora, "Corpus file(s)")->required();
  vcov->add_option("--seed", vc_seed, "Random seed (unused; echoed)");
  vcov->callback([&] {
    std::string corpora;
    for (const auto& c : vc_corpora) corpora += (corpora.empty() ? "" : ",") + c;
    echo_config("vocab-coverage", {{"vocab", vc_vocab},
                                   {"corpus", corpora},
                                   {"seed", std::to_string(vc_seed)}});
    const tokenizer::Vocab vocab = tokenizer::Vocab::load(vc_vocab);
    std::printf("%zu\n", evalsuite::vocab_coverage(vc_corpora, vocab));
  });

  // --- ablate ---
  auto* ablate = app.add_subcommand(
      "ablate", "Train all objective combinations and report the grid");
  std::string ab_pairs, ab_eval, ab_vocab, ab_out;
  int ab_k = 10, ab_jobs = 1;
  TrainFlags ab_flags;
  ModelFlags ab_model;
  ablate->add_option("--pairs", ab_pairs, "Training pairs file")->required();
  ablate->add_option("--eval-pairs", ab_eval, "Held-out pairs file")->required();
  ablate->add_option("--vocab", ab_vocab, "Vocab file")->required();
  ablate->add_option("--out", ab_out, "Output directory")->required();
  ablate->add_option("--k", ab_k, "Retrieval depth");
  ablate->add_option("--jobs", ab_jobs, "Parallel evaluation jobs");
  ab_flags.attach(ablate);
  ab_model.attach(ablate);
  ablate->callback([&] {
    pipeline::TrainConfig tc = ab_flags.resolve();
    const tokenizer::Vocab vocab = tokenizer::Vocab::load(ab_vocab);
    int pairs_max_len = 0;
    const objectives::PairBatch data =
        pipeline::load_pairs(ab_pairs, &pairs_max_len);
    tc.max_len = std::min(tc.max_len, pairs_max_len);
    const objectives::PairBatch eval_pairs = pipeline::load_pairs(ab_eval);
    const encoder::ModelConfig cfg = ab_model.resolve(vocab.size(), tc.max_len);

    KvPairs echo = tc.to_kv();
    echo.emplace_back("k", std::to_string(ab_k));
    echo.emplace_back("jobs", std::to_string(ab_jobs));
    echo_config("ablate", echo);

    // One shared random initialization: every combination starts from the
    // same weights and runs for the same number of steps.
    const encoder::Parameters init = encoder::init_parameters(cfg, tc.seed);
    std::vector<std::pair<std::string, std::string>> ckpts;
    const std::string base_dir =
        (std::filesystem::path(ab_out) / "base").string();
    encoder::save_checkpoint(base_dir, init, cfg, 0);
    ckpts.emplace_back("base", base_dir);
    for (const std::string combo : {"mlm", "mlm+seq", "mlm+tlm", "full"}) {
      const objectives::Toggles toggles = objectives::Toggles::parse(combo);
      encoder::Parameters params = init.clone();
      const std::string run_dir =
          (std::filesystem::path(ab_out) / toggles.str()).string();
      std::fprintf(stderr, "[xlit] training %s\n", toggles.str().c_str());
      const pipeline::TrainResult result =
          pipeline::train(params, cfg, data, tc, toggles, vocab, run_dir);
      ckpts.emplace_back(toggles.str(), result.checkpoint_dirs.back());
    }

    evalsuite::AblationTasks tasks;
    tasks.retrieval_pairs = &eval_pairs;
    tasks.k = ab_k;
    const evalsuite::MetricReport report =
        evalsuite::ablation_report(ckpts, vocab, tasks, ab_jobs);
    write_file_atomic((std::filesystem::path(ab_out) / "report.csv").string(),
                      report.to_csv());
    std::printf("%s", report.to_table().c_str());
  });

  // --- gradcheck ---
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference audit of the combined-loss gradient");
  int gc_pairs = 2;
  uint64_t gc_seed = 7;
  double gc_step = 1e-5;
  double gc_init_std = 0.25;
  int64_t gc_coords = 200;
  ModelFlags gc_model;
  gc_model.layers = 2;
  gc_model.hidden = 16;
  gc_model.heads = 2;
  gc_model.ffn = 32;
  gc_model.max_positions = 16;
  gc_model.pool_layer = 1;
  gradcheck->add_option("--pairs", gc_pairs, "Synthetic pair count");
  gradcheck->add_option("--seed", gc_seed, "Random seed");
  gradcheck->add_option("--step", gc_step, "Central-difference step");
  gradcheck->add_option("--init-std", gc_init_std,
                        "Weight scale at the audit point");
  gradcheck->add_option("--coords", gc_coords, "Coordinates to sample");
  gc_model.attach(gradcheck);
  gradcheck->callback([&] {
    echo_config("gradcheck", {{"pairs", std::to_string(gc_pairs)},
                              {"seed", std::to_string(gc_seed)},
                              {"step", format_double(gc_step)},
                              {"init_std", format_double(gc_init_std)},
                              {"coords", std::to_string(gc_coords)}});
    const int rc = cmd_gradcheck(gc_pairs, gc_seed, gc_step, gc_coords,
                                 gc_init_std, gc_model);
    if (rc != 0) throw NumericError("gradcheck", "max relative error >= 1e-4");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const xlit::NumericError& e) {
    std::fprintf(stderr, "numeric failure [%s]: %s\n", e.component.c_str(),
                 e.what());
    return 3;
  } catch (const xlit::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

#include "xlit/objectives.hpp"

#include <cstdio>

#include "xlit/io.hpp"

namespace xlit::objectives {

using numcore::Graph;
using numcore::TensorPtr;
using tokenizer::EncodedSequence;
using tokenizer::MaskedBatch;

namespace {
constexpr double kNegInf = -1e30;
}

Toggles Toggles::parse(const std::string& name) {
  if (name == "mlm") return {true, false, false};
  if (name == "mlm+seq") return {true, true, false};
  if (name == "mlm+tlm") return {true, false, true};
  if (name == "full" || name == "mlm+seq+tlm") return {true, true, true};
  throw DataError("unknown objective combination: " + name +
                  " (expected mlm|mlm+seq|mlm+tlm|full)");
}

std::string Toggles::str() const {
  std::string s = "mlm";
  if (seq) s += "+seq";
  if (tlm) s += "+tlm";
  return s;
}

TensorPtr mlm_loss(Graph& g, const encoder::Parameters& p,
                   const encoder::ModelConfig& cfg, const MaskedBatch& batch) {
  int masked = 0;
  for (const auto& item : batch)
    masked += static_cast<int>(item.mask_positions().size());
  if (masked == 0) {
    std::fprintf(stderr, "warning: mlm_loss over batch with no masked positions\n");
    return numcore::make_scalar(0.0);
  }

  std::vector<EncodedSequence> inputs;
  inputs.reserve(batch.size());
  for (const auto& item : batch) inputs.push_back(item.input);
  const encoder::HiddenStates hs = encoder::forward(g, p, cfg, inputs);

  std::vector<TensorPtr> logit_parts;
  std::vector<int> targets;
  for (size_t b = 0; b < batch.size(); ++b) {
    const TensorPtr final_hidden = hs.layers[static_cast<size_t>(cfg.layers)][b];
    logit_parts.push_back(encoder::mlm_logits(g, p, final_hidden));
    const int len = final_hidden->rows();
    for (int i = 0; i < len; ++i)
      targets.push_back(batch[b].labels[static_cast<size_t>(i)]);
  }
  return g.cross_entropy(g.concat_rows(logit_parts), targets);
}

TensorPtr contrastive_from_embeddings(Graph& g,
                                      const std::vector<TensorPtr>& pooled,
                                      double tau) {
  const int two_n = static_cast<int>(pooled.size());
  if (two_n < 2 || two_n % 2 != 0)
    throw DataError("contrastive loss needs an even, nonzero embedding count");
  const int n = two_n / 2;

  const TensorPtr emb = g.concat_rows(pooled);
  const TensorPtr sims = g.mul_scalar(g.matmul_nt(emb, emb), 1.0 / tau);

  // Keep the positive and both members of every other pair; exclude the
  // anchor's own embedding.
  auto mask = numcore::make_zeros({two_n, two_n});
  for (int a = 0; a < two_n; ++a)
    for (int j = 0; j < two_n; ++j) {
      const bool same_pair = (a % n) == (j % n);
      const bool is_positive = j == (a + n) % two_n;
      if (same_pair && !is_positive) mask->at(a, j) = kNegInf;
    }

  const TensorPtr denom = g.logsumexp_rows(g.add(sims, mask));
  std::vector<std::pair<int, int>> positives;
  positives.reserve(static_cast<size_t>(two_n));
  for (int a = 0; a < two_n; ++a) positives.push_back({a, (a + n) % two_n});
  const TensorPtr pos = g.gather(sims, positives);
  return g.mean_all(g.sub(denom, pos));
}

TensorPtr seq_contrastive_loss(Graph& g, const encoder::Parameters& p,
                               const encoder::ModelConfig& cfg,
                               const PairBatch& batch, double tau) {
  if (batch.size() < 1) throw DataError("seq_contrastive_loss needs N >= 1");
  std::vector<EncodedSequence> seqs;
  seqs.reserve(static_cast<size_t>(2 * batch.size()));
  for (const auto& [orig, latn] : batch.pairs) seqs.push_back(orig);
  for (const auto& [orig, latn] : batch.pairs) seqs.push_back(latn);

  const encoder::HiddenStates hs = encoder::forward(g, p, cfg, seqs);
  const auto& pool = hs.layers[static_cast<size_t>(cfg.pool_layer)];
  std::vector<TensorPtr> pooled;
  pooled.reserve(seqs.size());
  for (size_t i = 0; i < seqs.size(); ++i)
    pooled.push_back(encoder::mean_pool(g, pool[i], seqs[i]));
  return contrastive_from_embeddings(g, pooled, tau);
}

EncodedSequence build_tlm_pair(const EncodedSequence& orig,
                               const EncodedSequence& latn, int max_len,
                               Rng& rng) {
  if (max_len < 5) throw DataError("tlm pair max_len must be >= 5");

  auto content = [](const EncodedSequence& s) {
    std::vector<int> ids;
    const int len = s.real_len();
    for (int i = 0; i < len; ++i)
      if (s.special_flags[static_cast<size_t>(i)] == 0)
        ids.push_back(s.ids[static_cast<size_t>(i)]);
    return ids;
  };
  std::vector<int> first = content(orig);
  std::vector<int> second = content(latn);
  const bool orig_first = rng.uniform() < 0.5;
  if (!orig_first) std::swap(first, second);

  if (3 + first.size() + second.size() > static_cast<size_t>(max_len)) {
    const auto cap = static_cast<size_t>((max_len - 3) / 2);
    if (first.size() > cap) first.resize(cap);
    if (second.size() > cap) second.resize(cap);
  }

  EncodedSequence seq;
  seq.ids.push_back(tokenizer::kClsId);
  seq.ids.insert(seq.ids.end(), first.begin(), first.end());
  seq.ids.push_back(tokenizer::kSepId);
  seq.ids.insert(seq.ids.end(), second.begin(), second.end());
  seq.ids.push_back(tokenizer::kSepId);
  const auto real = seq.ids.size();
  seq.ids.resize(static_cast<size_t>(max_len), tokenizer::kPadId);
  seq.attention.assign(static_cast<size_t>(max_len), 0);
  seq.special_flags.assign(static_cast<size_t>(max_len), 1);
  for (size_t i = 0; i < real; ++i) seq.attention[i] = 1;
  for (size_t i = 1; i + 1 < real; ++i)
    if (seq.ids[i] != tokenizer::kSepId) seq.special_flags[i] = 0;
  return seq;
}

TensorPtr tlm_loss(Graph& g, const encoder::Parameters& p,
                   const encoder::ModelConfig& cfg, const PairBatch& batch,
                   double prob, int max_len, const tokenizer::Vocab& vocab,
                   Rng& rng) {
  MaskedBatch masked;
  masked.reserve(batch.pairs.size());
  for (const auto& [orig, latn] : batch.pairs) {
    const EncodedSequence joint = build_tlm_pair(orig, latn, max_len, rng);
    masked.push_back(tokenizer::mask_tokens(joint, prob, vocab, rng));
  }
  return mlm_loss(g, p, cfg, masked);
}

LossBreakdown combined_loss(Graph& g, const encoder::Parameters& p,
                            const encoder::ModelConfig& cfg,
                            const PairBatch& batch, const Toggles& toggles,
                            const Hyper& hyper, const tokenizer::Vocab& vocab,
                            Rng& rng) {
  if (!toggles.mlm) throw DataError("the MLM objective cannot be disabled");
  if (batch.size() < 1) throw DataError("combined_loss needs N >= 1");

  MaskedBatch orig_masked, latn_masked;
  for (const auto& [orig, latn] : batch.pairs)
    orig_masked.push_back(tokenizer::mask_tokens(orig, hyper.mask_prob, vocab, rng));
  for (const auto& [orig, latn] : batch.pairs)
    latn_masked.push_back(tokenizer::mask_tokens(latn, hyper.mask_prob, vocab, rng));

  LossBreakdown out;
  const TensorPtr l_orig = mlm_loss(g, p, cfg, orig_masked);
  const TensorPtr l_latn = mlm_loss(g, p, cfg, latn_masked);
  out.mlm_orig = l_orig->item();
  out.mlm_latn = l_latn->item();
  TensorPtr total = g.add(l_orig, l_latn);

  if (toggles.seq) {
    const TensorPtr l_seq = seq_contrastive_loss(g, p, cfg, batch, hyper.tau);
    out.seq = l_seq->item();
    total = g.add(total, l_seq);
  }
  if (toggles.tlm) {
    const TensorPtr l_tlm =
        tlm_loss(g, p, cfg, batch, hyper.mask_prob, hyper.max_len, vocab, rng);
    out.tlm = l_tlm->item();
    total = g.add(total, l_tlm);
  }
  out.total = total;
  return out;
}

}  // namespace xlit::objectives

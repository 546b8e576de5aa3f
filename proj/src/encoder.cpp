#include "xlit/encoder.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "xlit/rng.hpp"

namespace xlit::encoder {

namespace fs = std::filesystem;
using numcore::Graph;
using numcore::make_tensor;
using numcore::make_zeros;
using numcore::TensorPtr;

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

int ModelConfig::default_pool_layer(int layers) {
  const int k = static_cast<int>(std::lround(2.0 * layers / 3.0));
  return std::max(1, std::min(layers, k));
}

void ModelConfig::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1 || ffn < 1 || vocab < 6 ||
      max_positions < 3)
    throw DataError("model config values out of range");
  if (hidden % heads != 0) throw DataError("hidden must be divisible by heads");
  if (pool_layer < 1 || pool_layer > layers)
    throw DataError("pool_layer must be in [1, layers]");
}

KvPairs ModelConfig::to_kv() const {
  return {{"layers", std::to_string(layers)},
          {"hidden", std::to_string(hidden)},
          {"heads", std::to_string(heads)},
          {"ffn", std::to_string(ffn)},
          {"vocab", std::to_string(vocab)},
          {"max_positions", std::to_string(max_positions)},
          {"pool_layer", std::to_string(pool_layer)}};
}

ModelConfig ModelConfig::from_kv(const KvPairs& kv, const std::string& where) {
  ModelConfig cfg;
  auto get = [&](const char* key) {
    const std::string* v = kv_find(kv, key);
    if (v == nullptr) throw DataError(where + ": missing key " + key);
    return std::stoi(*v);
  };
  cfg.layers = get("layers");
  cfg.hidden = get("hidden");
  cfg.heads = get("heads");
  cfg.ffn = get("ffn");
  cfg.vocab = get("vocab");
  cfg.max_positions = get("max_positions");
  cfg.pool_layer = get("pool_layer");
  cfg.validate();
  return cfg;
}

namespace {

TensorPtr init_gaussian(Rng& rng, std::vector<int> shape, double std_dev) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.gaussian() * std_dev;
  return make_tensor(std::move(shape), std::move(v), true);
}

TensorPtr init_const(std::vector<int> shape, double c) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return make_tensor(std::move(shape),
                     std::vector<double>(static_cast<size_t>(n), c), true);
}

}  // namespace

Parameters init_parameters(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int d = cfg.hidden;
  Parameters p;
  p.tok_emb = init_gaussian(rng, {cfg.vocab, d}, 0.02);
  p.pos_emb = init_gaussian(rng, {cfg.max_positions, d}, 0.02);
  p.layers.resize(static_cast<size_t>(cfg.layers));
  for (auto& l : p.layers) {
    l.ln1_gain = init_const({d}, 1.0);
    l.ln1_bias = init_const({d}, 0.0);
    l.wq = init_gaussian(rng, {d, d}, 0.02);
    l.bq = init_const({d}, 0.0);
    l.wk = init_gaussian(rng, {d, d}, 0.02);
    l.wv = init_gaussian(rng, {d, d}, 0.02);
    l.bv = init_const({d}, 0.0);
    l.wo = init_gaussian(rng, {d, d}, 0.02);
    l.bo = init_const({d}, 0.0);
    l.ln2_gain = init_const({d}, 1.0);
    l.ln2_bias = init_const({d}, 0.0);
    l.w1 = init_gaussian(rng, {d, cfg.ffn}, 0.02);
    l.b1 = init_const({cfg.ffn}, 0.0);
    l.w2 = init_gaussian(rng, {cfg.ffn, d}, 0.02);
    l.b2 = init_const({d}, 0.0);
  }
  p.head_w = init_gaussian(rng, {d, d}, 0.02);
  p.head_b = init_const({d}, 0.0);
  p.head_ln_gain = init_const({d}, 1.0);
  p.head_ln_bias = init_const({d}, 0.0);
  p.head_out_bias = init_const({cfg.vocab}, 0.0);
  return p;
}

std::vector<std::pair<std::string, TensorPtr>> Parameters::named() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("tok_emb", tok_emb);
  out.emplace_back("pos_emb", pos_emb);
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    const Layer& l = layers[i];
    out.emplace_back(prefix + "ln1_gain", l.ln1_gain);
    out.emplace_back(prefix + "ln1_bias", l.ln1_bias);
    out.emplace_back(prefix + "wq", l.wq);
    out.emplace_back(prefix + "bq", l.bq);
    out.emplace_back(prefix + "wk", l.wk);
    out.emplace_back(prefix + "wv", l.wv);
    out.emplace_back(prefix + "bv", l.bv);
    out.emplace_back(prefix + "wo", l.wo);
    out.emplace_back(prefix + "bo", l.bo);
    out.emplace_back(prefix + "ln2_gain", l.ln2_gain);
    out.emplace_back(prefix + "ln2_bias", l.ln2_bias);
    out.emplace_back(prefix + "w1", l.w1);
    out.emplace_back(prefix + "b1", l.b1);
    out.emplace_back(prefix + "w2", l.w2);
    out.emplace_back(prefix + "b2", l.b2);
  }
  out.emplace_back("head_w", head_w);
  out.emplace_back("head_b", head_b);
  out.emplace_back("head_ln_gain", head_ln_gain);
  out.emplace_back("head_ln_bias", head_ln_bias);
  out.emplace_back("head_out_bias", head_out_bias);
  return out;
}

std::vector<TensorPtr> Parameters::all() const {
  std::vector<TensorPtr> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void Parameters::zero_grads() const {
  for (const auto& t : all()) t->zero_grad();
}

Parameters Parameters::clone() const {
  Parameters copy = *this;
  auto deep = [](TensorPtr& t) {
    t = make_tensor(t->shape, t->value, true);
  };
  deep(copy.tok_emb);
  deep(copy.pos_emb);
  for (auto& l : copy.layers) {
    deep(l.ln1_gain); deep(l.ln1_bias);
    deep(l.wq); deep(l.bq); deep(l.wk);
    deep(l.wv); deep(l.bv); deep(l.wo); deep(l.bo);
    deep(l.ln2_gain); deep(l.ln2_bias);
    deep(l.w1); deep(l.b1); deep(l.w2); deep(l.b2);
  }
  deep(copy.head_w);
  deep(copy.head_b);
  deep(copy.head_ln_gain);
  deep(copy.head_ln_bias);
  deep(copy.head_out_bias);
  return copy;
}

HiddenStates forward(Graph& g, const Parameters& p, const ModelConfig& cfg,
                     const std::vector<tokenizer::EncodedSequence>& batch) {
  const int d = cfg.hidden;
  const int heads = cfg.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  HiddenStates hs;
  hs.layers.assign(static_cast<size_t>(cfg.layers) + 1, {});

  for (const auto& seq : batch) {
    const int len = seq.real_len();
    if (len < 1) throw DataError("empty sequence in forward");
    if (len > cfg.max_positions)
      throw DataError("sequence longer than max_positions");
    std::vector<int> ids(seq.ids.begin(), seq.ids.begin() + len);
    for (int id : ids)
      if (id < 0 || id >= cfg.vocab) throw DataError("token id out of range");
    std::vector<int> pos(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) pos[static_cast<size_t>(i)] = i;

    TensorPtr x = g.add(g.embed_lookup(p.tok_emb, ids),
                        g.embed_lookup(p.pos_emb, pos));
    hs.layers[0].push_back(x);

    size_t layer_index = 1;
    for (const auto& l : p.layers) {
      // attention sublayer
      TensorPtr a = g.layernorm_rows(x, l.ln1_gain, l.ln1_bias);
      TensorPtr q = g.add_rowvec(g.matmul(a, l.wq), l.bq);
      TensorPtr k = g.matmul(a, l.wk);
      TensorPtr v = g.add_rowvec(g.matmul(a, l.wv), l.bv);
      std::vector<TensorPtr> ctx;
      ctx.reserve(static_cast<size_t>(heads));
      for (int h = 0; h < heads; ++h) {
        TensorPtr qh = g.slice_cols(q, h * dh, dh);
        TensorPtr kh = g.slice_cols(k, h * dh, dh);
        TensorPtr vh = g.slice_cols(v, h * dh, dh);
        TensorPtr att = g.softmax_rows(g.mul_scalar(g.matmul_nt(qh, kh), scale));
        ctx.push_back(g.matmul(att, vh));
      }
      TensorPtr attn_out =
          g.add_rowvec(g.matmul(g.concat_cols(ctx), l.wo), l.bo);
      x = g.add(x, attn_out);

      // feed-forward sublayer
      TensorPtr f = g.layernorm_rows(x, l.ln2_gain, l.ln2_bias);
      TensorPtr h1 = g.gelu(g.add_rowvec(g.matmul(f, l.w1), l.b1));
      TensorPtr ffn_out = g.add_rowvec(g.matmul(h1, l.w2), l.b2);
      x = g.add(x, ffn_out);

      hs.layers[layer_index].push_back(x);
      ++layer_index;
    }
  }
  return hs;
}

numcore::TensorPtr mlm_logits(Graph& g, const Parameters& p,
                              const TensorPtr& final_hidden) {
  TensorPtr z = g.gelu(g.add_rowvec(g.matmul(final_hidden, p.head_w), p.head_b));
  z = g.layernorm_rows(z, p.head_ln_gain, p.head_ln_bias);
  return g.add_rowvec(g.matmul_nt(z, p.tok_emb), p.head_out_bias);
}

numcore::TensorPtr mean_pool(Graph& g, const TensorPtr& layer_hidden,
                             const tokenizer::EncodedSequence& seq) {
  std::vector<int> rows;
  const int len = layer_hidden->rows();
  for (int i = 0; i < len && i < seq.length(); ++i)
    if (seq.special_flags[static_cast<size_t>(i)] == 0) rows.push_back(i);
  if (rows.empty()) throw DataError("mean_pool: no content positions");
  return g.mean_rows_subset(layer_hidden, rows);
}

void save_checkpoint(const std::string& dir, const Parameters& p,
                     const ModelConfig& cfg, long long step) {
  const fs::path target(dir);
  const fs::path tmp(dir + ".tmp");
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp);
  write_kv_file((tmp / "config.txt").string(), cfg.to_kv());
  for (const auto& [name, t] : p.named())
    numcore::save_tensor((tmp / (name + ".tsr")).string(), *t);
  write_kv_file((tmp / "manifest.txt").string(),
                {{"step", std::to_string(step)}});
  fs::remove_all(target, ec);
  fs::rename(tmp, target, ec);
  if (ec) throw DataError("cannot move checkpoint into place: " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path base(dir);
  Checkpoint ck;
  ck.config = ModelConfig::from_kv(read_kv_file((base / "config.txt").string()),
                                   dir + "/config.txt");
  const KvPairs manifest = read_kv_file((base / "manifest.txt").string());
  const std::string* step = kv_find(manifest, "step");
  if (step == nullptr) throw DataError(dir + ": manifest missing step");
  ck.step = std::stoll(*step);

  // Start from zeroed parameters of the right shapes, then load each dump.
  ck.params = init_parameters(ck.config, 0);
  for (auto& [name, t] : ck.params.named()) {
    const std::string path = (base / (name + ".tsr")).string();
    numcore::TensorPtr loaded;
    try {
      loaded = numcore::load_tensor(path);
    } catch (const DataError& e) {
      throw DataError(dir + ": cannot load tensor " + name + ": " + e.what());
    }
    if (loaded->shape != t->shape)
      throw DataError(dir + ": shape mismatch for tensor " + name);
    t->value = loaded->value;
    t->zero_grad();
  }
  return ck;
}

}  // namespace xlit::encoder

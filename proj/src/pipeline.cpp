#include "xlit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "xlit/evalsuite.hpp"
#include "xlit/io.hpp"
#include "xlit/utf8.hpp"

namespace xlit::pipeline {

namespace fs = std::filesystem;
using numcore::TensorPtr;

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.lr0 = 2e-5;
  c.max_len = 512;
  c.batch = 16;
  c.grad_accum = 8;
  c.epochs = 2;
  c.checkpoint_every = 2000;
  return c;
}

TrainConfig TrainConfig::profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw DataError("unknown profile: " + name + " (expected desk|paper)");
}

void TrainConfig::validate() const {
  if (lr0 <= 0 || beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1 ||
      eps <= 0 || weight_decay < 0 || mask_prob < 0 || mask_prob > 1 ||
      tau <= 0 || max_len < 3 || batch < 1 || grad_accum < 1 || epochs < 1 ||
      checkpoint_every < 1)
    throw DataError("train config values out of range");
}

KvPairs TrainConfig::to_kv() const {
  return {{"lr0", format_double(lr0)},
          {"beta1", format_double(beta1)},
          {"beta2", format_double(beta2)},
          {"eps", format_double(eps)},
          {"weight_decay", format_double(weight_decay)},
          {"mask_prob", format_double(mask_prob)},
          {"tau", format_double(tau)},
          {"max_len", std::to_string(max_len)},
          {"batch", std::to_string(batch)},
          {"grad_accum", std::to_string(grad_accum)},
          {"epochs", std::to_string(epochs)},
          {"checkpoint_every", std::to_string(checkpoint_every)},
          {"seed", std::to_string(seed)}};
}

void TrainConfig::apply_kv(const KvPairs& kv, const std::string& where) {
  for (const auto& [k, v] : kv) {
    try {
      if (k == "lr0") lr0 = std::stod(v);
      else if (k == "beta1") beta1 = std::stod(v);
      else if (k == "beta2") beta2 = std::stod(v);
      else if (k == "eps") eps = std::stod(v);
      else if (k == "weight_decay") weight_decay = std::stod(v);
      else if (k == "mask_prob") mask_prob = std::stod(v);
      else if (k == "tau") tau = std::stod(v);
      else if (k == "max_len") max_len = std::stoi(v);
      else if (k == "batch") batch = std::stoi(v);
      else if (k == "grad_accum") grad_accum = std::stoi(v);
      else if (k == "epochs") epochs = std::stoi(v);
      else if (k == "checkpoint_every") checkpoint_every = std::stoi(v);
      else if (k == "seed") seed = std::stoull(v);
      else throw DataError(where + ": unknown train config key: " + k);
    } catch (const std::invalid_argument&) {
      throw DataError(where + ": bad value for " + k + ": " + v);
    }
  }
  validate();
}

OptimizerState OptimizerState::init(const std::vector<TensorPtr>& params) {
  OptimizerState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.emplace_back(p->value.size(), 0.0);
    s.v.emplace_back(p->value.size(), 0.0);
  }
  return s;
}

size_t sample_corpus(const std::string& in_path, double fraction,
                     long long floor_count, Rng& rng,
                     const std::string& out_path) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw DataError("sample fraction must be in (0,1]");
  if (floor_count < 0) throw DataError("sample floor must be >= 0");
  const std::vector<std::string> lines = read_lines(in_path);
  const auto n = static_cast<long long>(lines.size());
  // Robust ceil: a tiny slack absorbs binary rounding in fraction*n.
  const auto want = static_cast<long long>(
      std::ceil(fraction * static_cast<double>(n) - 1e-9));
  const long long target = std::max(want, floor_count);

  std::vector<size_t> keep;
  if (target >= n) {
    keep.resize(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) keep[i] = i;
  } else {
    std::vector<size_t> idx(lines.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    keep.assign(idx.begin(), idx.begin() + target);
    std::sort(keep.begin(), keep.end());  // preserve original order
  }

  std::string out;
  for (size_t i : keep) {
    out += lines[i];
    out += '\n';
  }
  write_file_atomic(out_path, out);
  return keep.size();
}

objectives::PairBatch build_pair_corpus(const std::string& orig_path,
                                        const translit::RuleTable& table,
                                        const tokenizer::Vocab& vocab,
                                        int max_len, size_t* skipped_empty) {
  objectives::PairBatch batch;
  size_t skipped = 0;
  const std::vector<std::string> lines = read_lines(orig_path);
  for (size_t i = 0; i < lines.size(); ++i) {
    std::vector<char32_t> check;
    if (!utf8_decode(lines[i], check))
      throw DataError(orig_path + ":" + std::to_string(i + 1) +
                      ": invalid UTF-8");
    if (tokenizer::normalize(lines[i]).empty()) {
      ++skipped;
      continue;
    }
    batch.pairs.emplace_back(
        tokenizer::encode(lines[i], vocab, max_len),
        tokenizer::encode(translit::romanize(lines[i], table), vocab, max_len));
  }
  if (skipped_empty != nullptr) *skipped_empty = skipped;
  return batch;
}

namespace {

std::string ids_to_field(const tokenizer::EncodedSequence& seq) {
  std::string out;
  const int len = seq.real_len();
  for (int i = 0; i < len; ++i) {
    if (i) out += ' ';
    out += std::to_string(seq.ids[static_cast<size_t>(i)]);
  }
  return out;
}

tokenizer::EncodedSequence field_to_seq(const std::string& field, int max_len,
                                        const std::string& where) {
  std::vector<int> ids;
  size_t pos = 0;
  while (pos < field.size()) {
    size_t sp = field.find(' ', pos);
    if (sp == std::string::npos) sp = field.size();
    try {
      ids.push_back(std::stoi(field.substr(pos, sp - pos)));
    } catch (const std::exception&) {
      throw DataError(where + ": malformed id list");
    }
    pos = sp + 1;
  }
  if (ids.size() < 2 || ids.front() != tokenizer::kClsId ||
      ids.back() != tokenizer::kSepId ||
      static_cast<int>(ids.size()) > max_len)
    throw DataError(where + ": ids must be CLS ... SEP within max_len");
  tokenizer::EncodedSequence seq;
  seq.ids = std::move(ids);
  const auto real = seq.ids.size();
  seq.ids.resize(static_cast<size_t>(max_len), tokenizer::kPadId);
  seq.attention.assign(static_cast<size_t>(max_len), 0);
  seq.special_flags.assign(static_cast<size_t>(max_len), 1);
  for (size_t i = 0; i < real; ++i) seq.attention[i] = 1;
  for (size_t i = 1; i + 1 < real; ++i) seq.special_flags[i] = 0;
  return seq;
}

}  // namespace

void save_pairs(const std::string& path, const objectives::PairBatch& batch,
                int max_len) {
  std::string out = "# max_len " + std::to_string(max_len) + "\n";
  for (const auto& [orig, latn] : batch.pairs) {
    out += ids_to_field(orig);
    out += '\t';
    out += ids_to_field(latn);
    out += '\n';
  }
  write_file_atomic(path, out);
}

objectives::PairBatch load_pairs(const std::string& path, int* max_len_out) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0].rfind("# max_len ", 0) != 0)
    throw DataError(path + ": missing '# max_len N' header");
  int max_len = 0;
  try {
    max_len = std::stoi(lines[0].substr(10));
  } catch (const std::exception&) {
    throw DataError(path + ": bad max_len header");
  }
  if (max_len < 3) throw DataError(path + ": max_len must be >= 3");
  objectives::PairBatch batch;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    const size_t tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw DataError(where + ": expected two tab-separated id lists");
    batch.pairs.emplace_back(
        field_to_seq(lines[i].substr(0, tab), max_len, where),
        field_to_seq(lines[i].substr(tab + 1), max_len, where));
  }
  if (max_len_out != nullptr) *max_len_out = max_len;
  return batch;
}

void adamw_step(const std::vector<TensorPtr>& params, OptimizerState& state,
                double lr, const TrainConfig& cfg) {
  if (params.size() != state.m.size())
    throw std::invalid_argument("optimizer state does not match parameters");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    numcore::Tensor& p = *params[pi];
    if (p.grad.size() != p.value.size())
      throw std::invalid_argument("adamw_step: parameter grads missing");
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                          cfg.weight_decay * p.value[i]);
    }
  }
}

double linear_lr(long long t, long long total, double lr0) {
  if (total <= 0) throw DataError("linear_lr: total steps must be positive");
  if (t < 0 || t > total) throw DataError("linear_lr: step out of range");
  return lr0 * (1.0 - static_cast<double>(t) / static_cast<double>(total));
}

namespace {

std::string step_dir(const std::string& out_dir, long long step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step-%06lld", step);
  return (fs::path(out_dir) / buf).string();
}

void check_finite(const char* name, double value, long long step) {
  if (!std::isfinite(value))
    throw NumericError(name, "non-finite " + std::string(name) +
                                 " at optimizer step " + std::to_string(step));
}

}  // namespace

TrainResult train(encoder::Parameters& params, const encoder::ModelConfig& cfg,
                  const objectives::PairBatch& data, const TrainConfig& tcfg,
                  const objectives::Toggles& toggles,
                  const tokenizer::Vocab& vocab, const std::string& out_dir) {
  tcfg.validate();
  cfg.validate();
  if (data.size() < 1) throw DataError("train: empty pair corpus");
  if (tcfg.max_len > cfg.max_positions)
    throw DataError("train: max_len exceeds model max_positions");

  fs::create_directories(out_dir);
  const std::vector<TensorPtr> plist = params.all();
  OptimizerState opt = OptimizerState::init(plist);
  Rng rng(tcfg.seed);

  const long long m = data.size();
  const long long micro_per_epoch = (m + tcfg.batch - 1) / tcfg.batch;
  const long long steps_per_epoch =
      (micro_per_epoch + tcfg.grad_accum - 1) / tcfg.grad_accum;
  const long long total_steps = steps_per_epoch * tcfg.epochs;
  // First step runs at lr0 and the last one at exactly zero.
  const long long lr_span = std::max<long long>(total_steps - 1, 1);

  objectives::Hyper hyper;
  hyper.mask_prob = tcfg.mask_prob;
  hyper.tau = tcfg.tau;
  hyper.max_len = tcfg.max_len;

  std::string log = "step,lr,mlm_orig,mlm_latn,seq,tlm,total\n";
  TrainResult result;
  long long step = 0;

  std::vector<size_t> order(static_cast<size_t>(m));
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    rng.shuffle(order);
    size_t cursor = 0;
    while (cursor < order.size()) {
      // One optimizer step: up to grad_accum micro-batches.
      params.zero_grads();
      int accumulated = 0;
      double sum_orig = 0, sum_latn = 0, sum_seq = 0, sum_tlm = 0;
      while (accumulated < tcfg.grad_accum && cursor < order.size()) {
        objectives::PairBatch micro;
        const size_t end =
            std::min(cursor + static_cast<size_t>(tcfg.batch), order.size());
        for (size_t i = cursor; i < end; ++i)
          micro.pairs.push_back(data.pairs[order[i]]);
        cursor = end;

        numcore::Graph g;
        const objectives::LossBreakdown loss = objectives::combined_loss(
            g, params, cfg, micro, toggles, hyper, vocab, rng);
        check_finite("mlm_orig", *loss.mlm_orig, step + 1);
        check_finite("mlm_latn", *loss.mlm_latn, step + 1);
        if (loss.seq) check_finite("seq", *loss.seq, step + 1);
        if (loss.tlm) check_finite("tlm", *loss.tlm, step + 1);
        g.backward(loss.total);

        sum_orig += *loss.mlm_orig;
        sum_latn += *loss.mlm_latn;
        if (loss.seq) sum_seq += *loss.seq;
        if (loss.tlm) sum_tlm += *loss.tlm;
        ++accumulated;
      }

      // Average the accumulated gradients so the step matches one large batch.
      const double inv_a = 1.0 / accumulated;
      if (accumulated > 1)
        for (const auto& p : plist)
          for (double& gv : p->grad) gv *= inv_a;

      const double lr = linear_lr(step, lr_span, tcfg.lr0);
      adamw_step(plist, opt, lr, tcfg);
      ++step;

      const double avg_orig = sum_orig * inv_a;
      const double avg_latn = sum_latn * inv_a;
      const double avg_seq = sum_seq * inv_a;
      const double avg_tlm = sum_tlm * inv_a;
      double total = avg_orig + avg_latn;
      if (toggles.seq) total += avg_seq;
      if (toggles.tlm) total += avg_tlm;
      log += std::to_string(step) + "," + format_double(lr) + "," +
             format_double(avg_orig) + "," + format_double(avg_latn) + ",";
      log += toggles.seq ? format_double(avg_seq) : std::string();
      log += ",";
      log += toggles.tlm ? format_double(avg_tlm) : std::string();
      log += "," + format_double(total) + "\n";

      if (step % tcfg.checkpoint_every == 0) {
        const std::string dir = step_dir(out_dir, step);
        encoder::save_checkpoint(dir, params, cfg, step);
        result.checkpoint_dirs.push_back(dir);
      }
    }
  }

  const std::string final_dir = (fs::path(out_dir) / "final").string();
  encoder::save_checkpoint(final_dir, params, cfg, step);
  result.checkpoint_dirs.push_back(final_dir);
  result.loss_log_path = (fs::path(out_dir) / "loss_log.csv").string();
  write_file_atomic(result.loss_log_path, log);
  result.steps = step;
  return result;
}

std::string select_best_checkpoint(const std::vector<std::string>& ckpt_dirs,
                                   const objectives::PairBatch& dev_pairs,
                                   int k) {
  if (ckpt_dirs.empty()) throw DataError("select_best_checkpoint: no checkpoints");
  if (dev_pairs.size() < 2)
    throw DataError("select_best_checkpoint: need at least 2 dev pairs");

  std::string best_dir;
  double best_acc = -1.0;
  long long best_step = 0;
  for (const std::string& dir : ckpt_dirs) {
    const encoder::Checkpoint ck = encoder::load_checkpoint(dir);
    std::vector<tokenizer::EncodedSequence> orig, latn;
    for (const auto& [o, l] : dev_pairs.pairs) {
      orig.push_back(o);
      latn.push_back(l);
    }
    const TensorPtr src = evalsuite::sentence_embeddings(
        ck.params, ck.config, orig, ck.config.pool_layer);
    const TensorPtr tgt = evalsuite::sentence_embeddings(
        ck.params, ck.config, latn, ck.config.pool_layer);
    const evalsuite::RetrievalResult r = evalsuite::retrieval_topk(*src, *tgt, k);
    if (r.accuracy > best_acc ||
        (r.accuracy == best_acc && ck.step < best_step)) {
      best_acc = r.accuracy;
      best_dir = dir;
      best_step = ck.step;
    }
  }
  return best_dir;
}

}  // namespace xlit::pipeline

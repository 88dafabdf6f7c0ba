/* Copyright 2026 The TAB Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tab/evalcli/bleu.hpp"
#include "tab/evalcli/decode.hpp"
#include "tab/model/checkpoint.hpp"
#include "tab/model/tab_forward.hpp"
#include "tab/pipeline/run_record.hpp"
#include "tab/pipeline/train_config.hpp"

namespace tab {

struct TrainingDiverged : std::runtime_error {
  long step;
  TrainingDiverged(const std::string& stage, long s)
      : std::runtime_error(stage + " training diverged: non-finite loss at step " + std::to_string(s)), step(s) {}
};

template <typename T>
struct TrainResult {
  Checkpoint<T> checkpoint;
  RunRecord record;
};

// Per-epoch progress sink; may be empty.
using EpochLogger = std::function<void(const std::string& stage, const EpochScore&)>;

inline std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace detail {

inline std::size_t eval_count(const std::vector<Utterance>& split, int limit) {
  return limit > 0 ? std::min(split.size(), static_cast<std::size_t>(limit)) : split.size();
}

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(seed, 21, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_int(rng, 0, static_cast<long>(i) - 1)]);
  return order;
}

// Keeps the k best parameter snapshots by dev score.
template <typename T>
class BestRing {
 public:
  BestRing(std::size_t k, bool higher_is_better) : k_(k), higher_(higher_is_better) {}

  void offer(double score, int epoch, const ParamSet<T>& params) {
    const auto worse = [&](double a, double b) { return higher_ ? a < b : a > b; };
    if (items_.size() == k_ && !worse(items_.back().score, score)) return;
    Item it{score, epoch, params};
    auto pos = std::find_if(items_.begin(), items_.end(), [&](const Item& x) { return worse(x.score, score); });
    items_.insert(pos, std::move(it));
    if (items_.size() > k_) items_.pop_back();
  }

  ParamSet<T> best() const { return items_.front().params; }

  ParamSet<T> average() const {
    std::vector<const ParamSet<T>*> sets;
    for (const auto& it : items_) sets.push_back(&it.params);
    return average_params(sets);
  }

  std::vector<int> epochs() const {
    std::vector<int> e;
    for (const auto& it : items_) e.push_back(it.epoch);
    return e;
  }

  bool empty() const { return items_.empty(); }

 private:
  struct Item {
    double score;
    int epoch;
    ParamSet<T> params;
  };
  std::size_t k_;
  bool higher_;
  std::vector<Item> items_;
};

template <typename T>
StepStatus apply_step(StModel<T>& m, Graph<T>& g, const Var<T>& loss, AdamState<T>& state, const TrainConfig& cfg,
                      double lr) {
  m.params.zero_grad();
  g.backward(loss);
  return adam_step(m.params, state, cfg.adam, lr);
}

inline std::string join_epochs(const std::vector<int>& e) { return io::join_ints(e); }

inline io::KeyValues run_manifest(const std::string& stage, std::uint64_t seed, const ModelConfig& mc,
                                  const TrainConfig& tc) {
  io::KeyValues kv{{"stage", stage}, {"seed", std::to_string(seed)}};
  for (auto& p : mc.to_kv()) kv.push_back(p);
  for (auto& p : tc.to_kv("train.")) kv.push_back(p);
  return kv;
}

inline int decode_limit(const CorpusConfig& c) { return 2 * c.max_len + 2; }

}  // namespace detail

// Mean CTC loss per source token and greedy-CTC token error rate.
template <typename T>
std::pair<double, double> evaluate_asr(StModel<T>& m, const std::vector<Utterance>& split, int limit = 0) {
  double loss = 0.0, tokens = 0.0, errors = 0.0;
  const ForwardContext ctx{nullptr, 0.0};
  for (std::size_t i = 0; i < detail::eval_count(split, limit); ++i) {
    const Utterance& u = split[i];
    Graph<T> g;
    g.set_grad_enabled(false);
    Var<T> lp = ctc_head(g, m, encode_speech(g, m, u.speech, ctx));
    if (ctc_min_frames(u.x) <= lp.rows()) loss += ctc_loss(lp.value(), u.x, m.config.blank());
    const std::vector<int> hyp = collapse_beta(greedy_path(lp.value()).labels, m.config.blank());
    errors += static_cast<double>(edit_distance(hyp, u.x));
    tokens += static_cast<double>(u.x.size());
  }
  return {loss / tokens, errors / tokens};
}

// Mean unsmoothed CE per target token and teacher-forced token accuracy of
// the text model (source embeddings into the shared transformer).
template <typename T>
std::pair<double, double> evaluate_mt(StModel<T>& m, const std::vector<Utterance>& split, int limit = 0) {
  double loss = 0.0, hits = 0.0, tokens = 0.0;
  const ForwardContext ctx{nullptr, 0.0};
  for (std::size_t i = 0; i < detail::eval_count(split, limit); ++i) {
    const Utterance& u = split[i];
    Graph<T> g;
    g.set_grad_enabled(false);
    Var<T> lp = decode(g, m, decoder_input(u.y), encode_shared(g, m, embed_source(g, m, u.x), ctx), ctx);
    const std::vector<int> tgt = decoder_target(u.y);
    for (std::size_t j = 0; j < tgt.size(); ++j) loss -= static_cast<double>(lp.value()(static_cast<Index>(j), tgt[j]));
    hits += detail::token_accuracy(lp.value(), tgt);
    tokens += static_cast<double>(tgt.size());
  }
  return {loss / tokens, hits / tokens};
}

// Corpus BLEU of the speech translation model; beam 1 is greedy decoding.
template <typename T>
double evaluate_st(StModel<T>& m, const std::vector<Utterance>& split, int beam, int max_len, int limit = 0) {
  std::vector<std::vector<int>> hyps, refs;
  for (std::size_t i = 0; i < detail::eval_count(split, limit); ++i) {
    const Utterance& u = split[i];
    hyps.push_back(beam == 1 ? greedy_decode(m, u.speech, max_len).tokens : beam_decode(m, u.speech, beam, max_len).tokens);
    refs.push_back(u.y);
  }
  return corpus_bleu(hyps, refs);
}

// ASR pre-training of the speech encoder and CTC head with the CTC loss.
// Early-stopped on dev CTC loss; returns the best checkpoint.
template <typename T>
TrainResult<T> pretrain_asr(const CorpusBundle& corpus, const ModelConfig& mc, const TrainConfig& cfg,
                            std::uint64_t seed, const EpochLogger& log = {}) {
  cfg.validate();
  mc.validate();
  if (corpus.asr.empty()) throw std::invalid_argument("pretrain_asr: empty ASR split");
  StModel<T> m{mc, extract_group(make_model<T>(mc, derive_seed(seed, 1)).params, {ParamGroup::speech, ParamGroup::ctc})};
  AdamState<T> state;
  RunRecord rec;
  rec.stage = "asr";
  rec.manifest = detail::run_manifest("asr", seed, mc, cfg);
  EarlyStopper stopper(cfg.patience, false);
  ParamSet<T> best = m.params;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    long steps = 0;
    for (const Batch& b : make_batches(corpus.asr, detail::shuffled(corpus.asr.size(), seed, epoch), cfg.batch_size)) {
      ++step;
      const double lr = lr_at(step, cfg.peak_lr, cfg.warmup, cfg.schedule);
      Rng rng = make_rng(derive_seed(seed, 31, static_cast<std::uint64_t>(step)), 11);
      const ForwardContext ctx{&rng, mc.dropout_pretrain};
      Graph<T> g;
      std::vector<Var<T>> terms;
      double tokens = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) {
        const std::vector<int> x = b.x_of(k);
        Var<T> lp = ctc_head(g, m, encode_speech(g, m, b.speech_of(k), ctx));
        if (ctc_min_frames(x) > lp.rows()) {
          ++rec.skipped_utterances;
          continue;
        }
        terms.push_back(ctc_loss(lp, x, mc.blank()));
        tokens += static_cast<double>(x.size());
      }
      if (terms.empty()) continue;
      Var<T> loss = ops::scale(ops::sum(ops::concat_rows(terms)), static_cast<T>(1.0 / tokens));
      const double lv = static_cast<double>(loss.scalar());
      if (!std::isfinite(lv)) throw TrainingDiverged("asr", step);
      if (detail::apply_step(m, g, loss, state, cfg, lr) != StepStatus::ok) ++rec.skipped_steps;
      MetricRow row;
      row.step = step;
      row.epoch = epoch;
      row.stage = "asr";
      row.ctc = lv;
      row.total = lv;
      row.lr = lr;
      rec.rows.push_back(row);
      loss_sum += lv;
      ++steps;
    }
    const auto [dev_loss, ter] = evaluate_asr(m, corpus.st_dev, cfg.dev_limit);
    EpochScore es{epoch, steps ? loss_sum / static_cast<double>(steps) : 0.0, dev_loss, ter};
    rec.epochs.push_back(es);
    if (log) log("asr", es);
    const bool stop = stopper.observe(epoch, dev_loss);
    if (stopper.improved_at(epoch)) best = m.params;
    rec.stop_epoch = epoch;
    if (stop) {
      rec.early_stopped = true;
      break;
    }
  }
  rec.best_epoch = rec.convergence_epoch = stopper.best_epoch();
  rec.best_dev = stopper.best();
  m.params = best;
  const auto [dev_loss, dev_ter] = evaluate_asr(m, corpus.st_dev);
  const auto [test_loss, test_ter] = evaluate_asr(m, corpus.st_test);
  (void)dev_loss;
  (void)test_loss;
  rec.final_dev = dev_ter;
  rec.final_test = test_ter;
  TrainResult<T> out{Checkpoint<T>{mc, seed, {{"stage", "asr"}, {"dev_ter", format_metric(dev_ter)}}, m.params},
                     std::move(rec)};
  return out;
}

// MT pre-training of the shared transformer (source embeddings, encoder,
// decoder) with label-smoothed CE. Early-stopped on dev CE.
template <typename T>
TrainResult<T> pretrain_mt(const CorpusBundle& corpus, const ModelConfig& mc, const TrainConfig& cfg,
                           std::uint64_t seed, const EpochLogger& log = {}) {
  cfg.validate();
  mc.validate();
  if (corpus.mt.empty()) throw std::invalid_argument("pretrain_mt: empty MT split");
  StModel<T> m{mc, extract_group(make_model<T>(mc, derive_seed(seed, 2)).params, {ParamGroup::shared})};
  AdamState<T> state;
  RunRecord rec;
  rec.stage = "mt";
  rec.manifest = detail::run_manifest("mt", seed, mc, cfg);
  EarlyStopper stopper(cfg.patience, false);
  ParamSet<T> best = m.params;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    long steps = 0;
    for (const Batch& b : make_batches(corpus.mt, detail::shuffled(corpus.mt.size(), seed, epoch), cfg.batch_size)) {
      ++step;
      const double lr = lr_at(step, cfg.peak_lr, cfg.warmup, cfg.schedule);
      Rng rng = make_rng(derive_seed(seed, 32, static_cast<std::uint64_t>(step)), 12);
      const ForwardContext ctx{&rng, mc.dropout_pretrain};
      Graph<T> g;
      std::vector<Var<T>> rows;
      std::vector<int> targets;
      double hits = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) {
        const std::vector<int> y = b.y_of(k);
        Var<T> memory = encode_shared(g, m, embed_source(g, m, b.x_of(k)), ctx);
        rows.push_back(decode(g, m, decoder_input(y), memory, ctx));
        const std::vector<int> tgt = decoder_target(y);
        hits += detail::token_accuracy(rows.back().value(), tgt);
        targets.insert(targets.end(), tgt.begin(), tgt.end());
      }
      Var<T> loss = ce_label_smoothed(ops::concat_rows(rows), targets, cfg.label_smoothing);
      const double lv = static_cast<double>(loss.scalar());
      if (!std::isfinite(lv)) throw TrainingDiverged("mt", step);
      if (detail::apply_step(m, g, loss, state, cfg, lr) != StepStatus::ok) ++rec.skipped_steps;
      MetricRow row;
      row.step = step;
      row.epoch = epoch;
      row.stage = "mt";
      row.ce_o = lv;
      row.total = lv;
      row.lr = lr;
      row.acc_o = hits / static_cast<double>(targets.size());
      rec.rows.push_back(row);
      loss_sum += lv;
      ++steps;
    }
    const auto [dev_loss, acc] = evaluate_mt(m, corpus.st_dev, cfg.dev_limit);
    EpochScore es{epoch, steps ? loss_sum / static_cast<double>(steps) : 0.0, dev_loss, acc};
    rec.epochs.push_back(es);
    if (log) log("mt", es);
    const bool stop = stopper.observe(epoch, dev_loss);
    if (stopper.improved_at(epoch)) best = m.params;
    rec.stop_epoch = epoch;
    if (stop) {
      rec.early_stopped = true;
      break;
    }
  }
  rec.best_epoch = rec.convergence_epoch = stopper.best_epoch();
  rec.best_dev = stopper.best();
  m.params = best;
  rec.final_dev = evaluate_mt(m, corpus.st_dev).second;
  rec.final_test = evaluate_mt(m, corpus.st_test).second;
  TrainResult<T> out{
      Checkpoint<T>{mc, seed, {{"stage", "mt"}, {"dev_accuracy", format_metric(rec.final_dev)}}, m.params},
      std::move(rec)};
  return out;
}

inline TabOptions tab_options(const TrainConfig& cfg) {
  TabOptions o;
  o.lambda = cfg.lambda;
  o.alpha = cfg.alpha;
  o.label_smoothing = cfg.label_smoothing;
  o.divergence = cfg.divergence;
  o.flow = cfg.flow;
  o.policy = cfg.policy;
  o.single_branch = cfg.single_branch;
  o.gold_token_uncertainty = cfg.gold_token_uncertainty;
  o.upsilon_smoothing = cfg.upsilon_smoothing;
  return o;
}

// ST fine-tuning with TAB from ASR and MT checkpoints. Logs one metric row
// per step, early-stops on greedy dev BLEU, and averages the best
// `average_best` snapshots. Final scores use beam search on dev and test.
template <typename T>
TrainResult<T> finetune_st(const CorpusBundle& corpus, const Checkpoint<T>& asr, const Checkpoint<T>& mt,
                           const TrainConfig& cfg, std::uint64_t seed, const EpochLogger& log = {}) {
  cfg.validate();
  if (corpus.st_train.empty()) throw std::invalid_argument("finetune_st: empty ST training split");
  if (!(asr.config == mt.config)) throw TransferError("finetune_st: ASR and MT checkpoints use different model configs");
  const ModelConfig& mc = asr.config;
  StModel<T> m = init_from_pretrained(mc, asr.params, mt.params, nullptr, seed);
  const TabOptions opt = tab_options(cfg);
  const int max_len = detail::decode_limit(corpus.config);
  AdamState<T> state;
  UpsilonTracker tracker;
  RunRecord rec;
  rec.stage = "st";
  rec.manifest = detail::run_manifest("st", seed, mc, cfg);
  EarlyStopper stopper(cfg.patience, true);
  detail::BestRing<T> ring(static_cast<std::size_t>(cfg.average_best), true);
  long step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    long steps = 0;
    for (const Batch& b :
         make_batches(corpus.st_train, detail::shuffled(corpus.st_train.size(), seed, epoch), cfg.batch_size)) {
      ++step;
      const double lr = lr_at(step, cfg.peak_lr, cfg.warmup, cfg.schedule);
      Graph<T> g;
      TabOutput<T> out = forward_tab(g, m, b, opt, derive_seed(seed, 33, static_cast<std::uint64_t>(step)), &tracker);
      rec.skipped_utterances += out.skipped;
      const LossBreakdown& lb = out.breakdown;
      if (!std::isfinite(lb.total)) throw TrainingDiverged("st", step);
      if (detail::apply_step(m, g, out.total, state, cfg, lr) != StepStatus::ok) ++rec.skipped_steps;
      MetricRow row;
      row.step = step;
      row.epoch = epoch;
      row.stage = "st";
      row.ce_o = lb.ce_o;
      row.ctc = lb.ctc;
      row.total = lb.total;
      row.upsilon = out.upsilon;
      row.lr = lr;
      row.acc_o = out.acc_o;
      if (!cfg.single_branch) {
        row.ce_a = lb.ce_a;
        if (cfg.divergence != DivergenceKind::none) row.cons = lb.cons;
        row.ratio = lb.ce_a / lb.ce_o;
        row.p_star = out.p_star;
        row.acc_a = out.acc_a;
      }
      rec.rows.push_back(row);
      loss_sum += lb.total;
      ++steps;
    }
    const double bleu = evaluate_st(m, corpus.st_dev, 1, max_len, cfg.dev_limit);
    EpochScore es{epoch, steps ? loss_sum / static_cast<double>(steps) : 0.0, bleu, 0.0};
    rec.epochs.push_back(es);
    if (log) log("st", es);
    ring.offer(bleu, epoch, m.params);
    const bool stop = stopper.observe(epoch, bleu);
    rec.stop_epoch = epoch;
    if (stop) {
      rec.early_stopped = true;
      break;
    }
  }
  rec.best_epoch = rec.convergence_epoch = stopper.best_epoch();
  rec.best_dev = stopper.best();
  m.params = ring.average();
  rec.final_dev = evaluate_st(m, corpus.st_dev, cfg.beam, max_len);
  rec.final_test = evaluate_st(m, corpus.st_test, cfg.beam, max_len);
  Checkpoint<T> ck{mc, seed, {{"stage", "st"}, {"averaged_epochs", detail::join_epochs(ring.epochs())}}, m.params};
  return TrainResult<T>{std::move(ck), std::move(rec)};
}

}  // namespace tab

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
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tab/kv.hpp"
#include "tab/pipeline/trainer.hpp"
#include "tab/synthdata/corpus_io.hpp"

namespace tab {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Everything a run needs. The file form is flat `key = value`; see
// config_reference() for every key and its default.
struct ExperimentConfig {
  CorpusConfig corpus;
  std::uint64_t corpus_seed = 1234;
  std::string corpus_dir;  // load from here when it holds a corpus, else generate
  ModelConfig model;
  std::uint64_t pretrain_seed = 1;
  std::uint64_t seed = 1;  // fine-tuning seed
  TrainConfig asr = TrainConfig::defaults(Stage::asr);
  TrainConfig mt = TrainConfig::defaults(Stage::mt);
  TrainConfig st = TrainConfig::defaults(Stage::st);
  std::string asr_checkpoint;  // empty: <out>/asr/model.ckpt
  std::string mt_checkpoint;   // empty: <out>/mt/model.ckpt
  std::string st_checkpoint;   // empty: <out>/st/model.ckpt
  // Sweep grid, comma separated.
  std::string sweep_divergence = "bi_kl";
  std::string sweep_alpha = "0,1,5";
  std::string sweep_p_star = "0,dynamic";
  std::string sweep_seeds = "1,2,3";
  bool sweep_baseline = false;
};

namespace detail {

inline const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> k = {"d_model",        "speech_layers",    "encoder_layers",
                                             "decoder_layers", "heads",            "ffn_dim",
                                             "dropout_pretrain", "dropout_finetune", "downsample"};
  return k;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = io::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline io::KeyValues experiment_to_kv(const ExperimentConfig& e) {
  io::KeyValues kv;
  kv.emplace_back("seed", std::to_string(e.seed));
  kv.emplace_back("pretrain_seed", std::to_string(e.pretrain_seed));
  kv.emplace_back("corpus.seed", std::to_string(e.corpus_seed));
  kv.emplace_back("corpus.dir", e.corpus_dir);
  for (auto& p : corpus_config_kv(e.corpus, "corpus.")) kv.push_back(p);
  const io::KeyValues mkv = e.model.to_kv("model.");
  for (const auto& k : detail::model_keys()) {
    for (const auto& p : mkv) {
      if (p.first == "model." + k) kv.push_back(p);
    }
  }
  for (auto& p : e.asr.to_kv("asr.")) kv.push_back(p);
  for (auto& p : e.mt.to_kv("mt.")) kv.push_back(p);
  for (auto& p : e.st.to_kv("st.")) kv.push_back(p);
  kv.emplace_back("asr_checkpoint", e.asr_checkpoint);
  kv.emplace_back("mt_checkpoint", e.mt_checkpoint);
  kv.emplace_back("st_checkpoint", e.st_checkpoint);
  kv.emplace_back("sweep.divergence", e.sweep_divergence);
  kv.emplace_back("sweep.alpha", e.sweep_alpha);
  kv.emplace_back("sweep.p_star", e.sweep_p_star);
  kv.emplace_back("sweep.seeds", e.sweep_seeds);
  kv.emplace_back("sweep.baseline", e.sweep_baseline ? "true" : "false");
  return kv;
}

// Model dimensions tied to the corpus (vocabulary sizes, feature width).
inline ModelConfig resolved_model(const ExperimentConfig& e) {
  ModelConfig m = e.model;
  m.n_source = e.corpus.n_source;
  m.target_size = e.corpus.n_target + ExtendedVocab::kNumSpecials;
  m.d_feat = e.corpus.speech.d_feat;
  return m;
}

inline void validate(const ExperimentConfig& e) {
  resolved_model(e).validate();
  e.asr.validate();
  e.mt.validate();
  e.st.validate();
  if (e.corpus.n_dev < 1 || e.corpus.n_test < 1) throw ConfigError("corpus: n_dev and n_test must be >= 1");
  if (e.corpus.min_len < 1 || e.corpus.max_len < e.corpus.min_len) throw ConfigError("corpus: invalid length range");
}

// Applies `key = value` pairs on top of the defaults. Unknown keys, repeated
// keys and malformed values are errors.
inline ExperimentConfig parse_experiment(const io::KeyValues& kv, const std::string& origin = "config") {
  ExperimentConfig e;
  std::set<std::string> known;
  for (const auto& [k, v] : experiment_to_kv(e)) known.insert(k);
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : kv) {
    if (!known.count(k)) throw ConfigError(origin + ": unknown key '" + k + "'");
    if (!m.emplace(k, v).second) throw ConfigError(origin + ": key '" + k + "' given twice");
  }
  try {
    if (auto it = m.find("seed"); it != m.end()) e.seed = io::parse_u64(it->second, "seed");
    if (auto it = m.find("pretrain_seed"); it != m.end()) e.pretrain_seed = io::parse_u64(it->second, "pretrain_seed");
    if (auto it = m.find("corpus.seed"); it != m.end()) e.corpus_seed = io::parse_u64(it->second, "corpus.seed");
    if (auto it = m.find("corpus.dir"); it != m.end()) e.corpus_dir = it->second;
    update_corpus_config(e.corpus, m, "corpus.");
    e.model.update_from(m, "model.");
    e.asr.update_from(m, "asr.");
    e.mt.update_from(m, "mt.");
    e.st.update_from(m, "st.");
    if (auto it = m.find("asr_checkpoint"); it != m.end()) e.asr_checkpoint = it->second;
    if (auto it = m.find("mt_checkpoint"); it != m.end()) e.mt_checkpoint = it->second;
    if (auto it = m.find("st_checkpoint"); it != m.end()) e.st_checkpoint = it->second;
    if (auto it = m.find("sweep.divergence"); it != m.end()) e.sweep_divergence = it->second;
    if (auto it = m.find("sweep.alpha"); it != m.end()) e.sweep_alpha = it->second;
    if (auto it = m.find("sweep.p_star"); it != m.end()) e.sweep_p_star = it->second;
    if (auto it = m.find("sweep.seeds"); it != m.end()) e.sweep_seeds = it->second;
    if (auto it = m.find("sweep.baseline"); it != m.end()) e.sweep_baseline = io::parse_bool(it->second, "sweep.baseline");
    validate(e);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(origin + ": " + ex.what());
  }
  return e;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  return parse_experiment(io::read_key_values(path), path);
}

// Every key with its default value and a one-line description.
inline std::vector<std::array<std::string, 3>> config_reference() {
  static const std::map<std::string, std::string> docs = {
      {"seed", "fine-tuning seed (shuffling, dropout, replacement draws)"},
      {"pretrain_seed", "seed of both pre-training runs"},
      {"corpus.seed", "seed of the synthetic corpus"},
      {"corpus.dir", "corpus directory; generated from corpus.* when absent"},
      {"corpus.n_asr", "ASR pairs (speech, transcript)"},
      {"corpus.n_mt", "MT pairs (transcript, translation)"},
      {"corpus.n_st_train", "ST training triples"},
      {"corpus.n_dev", "ST dev triples"},
      {"corpus.n_test", "ST test triples"},
      {"corpus.min_len", "shortest transcript"},
      {"corpus.max_len", "longest transcript"},
      {"corpus.n_source", "source words"},
      {"corpus.n_target", "target words, >= corpus.n_source"},
      {"corpus.d_feat", "speech feature width"},
      {"corpus.noise_sigma", "Gaussian noise added to every frame"},
      {"corpus.silence_prob", "chance of a silence step between words"},
      {"corpus.min_repeat", "fewest acoustic steps per word"},
      {"corpus.max_repeat", "most acoustic steps per word"},
      {"corpus.frame_hold", "raw frames per acoustic step"},
      {"model.d_model", "model width"},
      {"model.speech_layers", "speech encoder self-attention layers"},
      {"model.encoder_layers", "shared encoder layers"},
      {"model.decoder_layers", "decoder layers"},
      {"model.heads", "attention heads"},
      {"model.ffn_dim", "feed-forward inner width"},
      {"model.dropout_pretrain", "dropout during ASR and MT pre-training"},
      {"model.dropout_finetune", "dropout during ST fine-tuning"},
      {"model.downsample", "speech frame reduction, a power of two"},
      {"asr_checkpoint", "ASR checkpoint for fine-tuning; empty uses <out>/asr/model.ckpt"},
      {"mt_checkpoint", "MT checkpoint for fine-tuning; empty uses <out>/mt/model.ckpt"},
      {"st_checkpoint", "ST checkpoint for evaluate; empty uses <out>/st/model.ckpt"},
      {"sweep.divergence", "comma list of none, jsd, kl_orig_to_aux, kl_aux_to_orig, bi_kl"},
      {"sweep.alpha", "comma list of consistency weights"},
      {"sweep.p_star", "comma list of fixed probabilities or 'dynamic'"},
      {"sweep.seeds", "comma list of fine-tuning seeds"},
      {"sweep.baseline", "also run the single-branch baseline cell"},
  };
  static const std::map<std::string, std::string> train_docs = {
      {"beta1", "Adam beta1"},
      {"beta2", "Adam beta2"},
      {"adam_eps", "Adam epsilon"},
      {"peak_lr", "learning rate reached at the end of warmup"},
      {"warmup", "linear warmup steps"},
      {"schedule", "inverse_sqrt or constant after warmup"},
      {"lambda", "CTC loss weight"},
      {"alpha", "consistency loss weight"},
      {"p_star", "replacement probability: a value in [0,1] or 'dynamic'"},
      {"gamma", "dynamic p* scale on the uncertainty"},
      {"divergence", "none, jsd, kl_orig_to_aux, kl_aux_to_orig or bi_kl"},
      {"consistency_flow", "both, stop_orig or stop_aux"},
      {"label_smoothing", "label smoothing of the CE losses"},
      {"patience", "epochs without dev improvement before stopping"},
      {"max_epochs", "hard epoch cap"},
      {"batch_size", "utterances per step"},
      {"single_branch", "original branch only (baseline)"},
      {"uncertainty", "entropy (full distribution) or gold_token"},
      {"upsilon_smoothing", "running-average factor of the uncertainty; 0 is the raw value"},
      {"average_best", "best checkpoints averaged at the end"},
      {"dev_limit", "dev utterances scored per epoch; 0 is all"},
      {"beam", "beam size of the final evaluation"},
  };
  std::vector<std::array<std::string, 3>> out;
  for (const auto& [k, v] : experiment_to_kv(ExperimentConfig{})) {
    std::string doc;
    if (auto it = docs.find(k); it != docs.end()) {
      doc = it->second;
    } else {
      const auto dot = k.find('.');
      const std::string stage = k.substr(0, dot);
      if (auto jt = train_docs.find(k.substr(dot + 1)); jt != train_docs.end()) doc = stage + ": " + jt->second;
    }
    out.push_back({k, v, doc});
  }
  return out;
}

// Loads the corpus from e.corpus_dir when it holds one, otherwise builds it
// from the config and writes it there (if a directory is named).
inline CorpusBundle obtain_corpus(const ExperimentConfig& e) {
  if (!e.corpus_dir.empty() && std::filesystem::exists(std::filesystem::path(e.corpus_dir) / "corpus.manifest")) {
    return read_corpus(e.corpus_dir);
  }
  CorpusBundle b = build_corpus(e.corpus, e.corpus_seed);
  if (!e.corpus_dir.empty()) write_corpus(b, e.corpus_dir);
  return b;
}

// ----- sweep -----

struct CellSpec {
  std::string id;
  DivergenceKind divergence = DivergenceKind::bi_kl;
  double alpha = 1.0;
  ReplacePolicy policy;
  bool baseline = false;

  TrainConfig apply(TrainConfig base) const {
    base.divergence = divergence;
    base.alpha = alpha;
    base.policy.mode = policy.mode;
    base.policy.fixed_p = policy.fixed_p;
    base.single_branch = baseline;
    return base;
  }
};

struct SweepSpec {
  std::vector<CellSpec> cells;
  std::vector<std::uint64_t> seeds;
};

inline std::string cell_id(DivergenceKind d, double alpha, const ReplacePolicy& p) {
  return std::string(to_string(d)) + "_a" + io::format_double(alpha) + "_p" + format_p_star(p);
}

inline CellSpec baseline_cell() {
  CellSpec c;
  c.id = "baseline";
  c.divergence = DivergenceKind::none;
  c.alpha = 0.0;
  c.policy.mode = ReplaceMode::fixed;
  c.policy.fixed_p = 0.0;
  c.baseline = true;
  return c;
}

inline CellSpec make_cell(DivergenceKind d, double alpha, const ReplacePolicy& p) {
  CellSpec c;
  c.divergence = d;
  c.alpha = alpha;
  c.policy = p;
  c.id = cell_id(d, alpha, p);
  return c;
}

inline SweepSpec sweep_from(const ExperimentConfig& e) {
  SweepSpec s;
  if (e.sweep_baseline) s.cells.push_back(baseline_cell());
  for (const auto& d : detail::split_list(e.sweep_divergence)) {
    for (const auto& a : detail::split_list(e.sweep_alpha)) {
      for (const auto& p : detail::split_list(e.sweep_p_star)) {
        ReplacePolicy pol = e.st.policy;
        parse_p_star(p, pol);
        const double alpha = io::parse_double(a, "sweep.alpha");
        if (alpha < 0.0) throw ConfigError("sweep.alpha: weights must be >= 0");
        if (pol.mode == ReplaceMode::fixed && !(pol.fixed_p >= 0.0 && pol.fixed_p <= 1.0)) {
          throw ConfigError("sweep.p_star: values must lie in [0, 1]");
        }
        s.cells.push_back(make_cell(parse_divergence(d), alpha, pol));
      }
    }
  }
  for (const auto& v : detail::split_list(e.sweep_seeds)) s.seeds.push_back(io::parse_u64(v, "sweep.seeds"));
  if (s.cells.empty() || s.seeds.empty()) throw ConfigError("sweep: empty grid");
  return s;
}

struct ResultRow {
  std::string cell;
  std::string divergence;
  double alpha = 0.0;
  std::string p_star;
  std::uint64_t seed = 0;
  double dev_bleu = 0.0;
  double test_bleu = 0.0;
  int epochs = 0;  // convergence epoch
  bool ok = true;
  std::string note;  // failure message when !ok
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

// One finished (or failed) fine-tuning run of a sweep.
struct CellRun {
  CellSpec cell;
  std::uint64_t seed = 0;
  RunRecord record;
};

struct SweepOutput {
  ResultTable table;
  std::vector<CellRun> runs;  // successful runs only
};

inline ResultRow result_row(const CellSpec& c, std::uint64_t seed, const RunRecord& r) {
  ResultRow row;
  row.cell = c.id;
  row.divergence = std::string(to_string(c.divergence));
  row.alpha = c.alpha;
  row.p_star = format_p_star(c.policy);
  row.seed = seed;
  row.dev_bleu = r.final_dev;
  row.test_bleu = r.final_test;
  row.epochs = r.convergence_epoch;
  return row;
}

// Fine-tunes every (cell, seed) from shared pre-trained checkpoints. A
// failing run becomes a failure row and the sweep carries on.
template <typename T>
SweepOutput run_sweep(const CorpusBundle& corpus, const Checkpoint<T>& asr, const Checkpoint<T>& mt,
                      const TrainConfig& base, const SweepSpec& spec, const EpochLogger& log = {}) {
  SweepOutput out;
  for (const auto& cell : spec.cells) {
    for (std::uint64_t seed : spec.seeds) {
      try {
        TrainResult<T> r = finetune_st(corpus, asr, mt, cell.apply(base), seed, log);
        r.record.manifest.emplace_back("cell", cell.id);
        out.table.rows.push_back(result_row(cell, seed, r.record));
        out.runs.push_back({cell, seed, std::move(r.record)});
      } catch (const std::exception& ex) {
        ResultRow row = result_row(cell, seed, RunRecord{});
        row.ok = false;
        row.note = ex.what();
        out.table.rows.push_back(row);
      }
    }
  }
  return out;
}

// ----- report -----

struct CellSummary {
  std::string cell;
  std::size_t completed = 0;
  double dev_mean = 0, dev_min = 0, dev_max = 0;
  double test_mean = 0, test_min = 0, test_max = 0;
  double avg_mean = 0;  // mean of (dev + test) / 2
  double epochs_mean = 0;
  int epochs_min = 0, epochs_max = 0;
};

inline std::vector<CellSummary> summarize(const ResultTable& t) {
  std::map<std::string, std::vector<const ResultRow*>> by_cell;
  for (const auto& r : t.rows) by_cell[r.cell].push_back(&r);
  std::vector<CellSummary> out;
  for (const auto& [cell, rows] : by_cell) {
    CellSummary s;
    s.cell = cell;
    s.dev_min = s.test_min = std::numeric_limits<double>::infinity();
    s.dev_max = s.test_max = -std::numeric_limits<double>::infinity();
    s.epochs_min = std::numeric_limits<int>::max();
    for (const auto* r : rows) {
      if (!r->ok) continue;
      ++s.completed;
      s.dev_mean += r->dev_bleu;
      s.test_mean += r->test_bleu;
      s.avg_mean += 0.5 * (r->dev_bleu + r->test_bleu);
      s.epochs_mean += r->epochs;
      s.dev_min = std::min(s.dev_min, r->dev_bleu);
      s.dev_max = std::max(s.dev_max, r->dev_bleu);
      s.test_min = std::min(s.test_min, r->test_bleu);
      s.test_max = std::max(s.test_max, r->test_bleu);
      s.epochs_min = std::min(s.epochs_min, r->epochs);
      s.epochs_max = std::max(s.epochs_max, r->epochs);
    }
    if (s.completed > 0) {
      const double n = static_cast<double>(s.completed);
      s.dev_mean /= n;
      s.test_mean /= n;
      s.avg_mean /= n;
      s.epochs_mean /= n;
    } else {
      s = CellSummary{cell};
    }
    out.push_back(s);
  }
  return out;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw io::FormatError("cannot write " + p.string());
  return out;
}

inline std::string fmt(double v) { return format_metric(v); }

}  // namespace detail

inline void write_results_tsv(std::ostream& out, const ResultTable& t) {
  std::vector<const ResultRow*> rows;
  for (const auto& r : t.rows) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const ResultRow* a, const ResultRow* b) {
    return a->cell != b->cell ? a->cell < b->cell : a->seed < b->seed;
  });
  out << "cell_id\tdivergence\talpha\tp_star\tseed\tdev_bleu\ttest_bleu\tepochs\n";
  for (const auto* r : rows) {
    out << r->cell << '\t' << r->divergence << '\t' << io::format_double(r->alpha) << '\t' << r->p_star << '\t'
        << r->seed << '\t';
    if (r->ok) {
      out << detail::fmt(r->dev_bleu) << '\t' << detail::fmt(r->test_bleu) << '\t' << r->epochs << '\n';
    } else {
      out << "failed\tfailed\tfailed\n";
    }
  }
}

// results.tsv, summary.tsv, failures.tsv, curves/<cell>.csv and
// runs/<cell>/seed<k>/{metrics.csv,manifest.txt} under `dir`.
inline void emit_report(const std::filesystem::path& dir, const ResultTable& t, const std::vector<CellRun>& runs) {
  {
    auto out = detail::open_out(dir / "results.tsv");
    write_results_tsv(out, t);
  }
  {
    auto out = detail::open_out(dir / "summary.tsv");
    out << "cell_id\tseeds\tdev_mean\tdev_min\tdev_max\ttest_mean\ttest_min\ttest_max\tavg\tepochs_mean\tepochs_min\t"
           "epochs_max\n";
    for (const auto& s : summarize(t)) {
      out << s.cell << '\t' << s.completed;
      if (s.completed == 0) {
        out << "\tfailed\tfailed\tfailed\tfailed\tfailed\tfailed\tfailed\tfailed\tfailed\tfailed\n";
        continue;
      }
      out << '\t' << detail::fmt(s.dev_mean) << '\t' << detail::fmt(s.dev_min) << '\t' << detail::fmt(s.dev_max)
          << '\t' << detail::fmt(s.test_mean) << '\t' << detail::fmt(s.test_min) << '\t' << detail::fmt(s.test_max)
          << '\t' << detail::fmt(s.avg_mean) << '\t' << detail::fmt(s.epochs_mean) << '\t' << s.epochs_min << '\t'
          << s.epochs_max << '\n';
    }
  }
  {
    auto out = detail::open_out(dir / "failures.tsv");
    out << "cell_id\tseed\tnote\n";
    for (const auto& r : t.rows) {
      if (!r.ok) out << r.cell << '\t' << r.seed << '\t' << r.note << '\n';
    }
  }
  std::map<std::string, std::vector<const CellRun*>> by_cell;
  for (const auto& r : runs) by_cell[r.cell.id].push_back(&r);
  for (const auto& [cell, rs] : by_cell) {
    struct Point {
      long step;
      std::uint64_t seed;
      const MetricRow* row;
    };
    std::vector<Point> pts;
    for (const auto* r : rs) {
      for (const auto& row : r->record.rows) pts.push_back({row.step, r->seed, &row});
      const auto run_dir = dir / "runs" / cell / ("seed" + std::to_string(r->seed));
      write_metrics_csv(run_dir / "metrics.csv", r->record.rows);
      write_manifest(run_dir / "manifest.txt", r->record);
    }
    std::sort(pts.begin(), pts.end(),
              [](const Point& a, const Point& b) { return a.step != b.step ? a.step < b.step : a.seed < b.seed; });
    auto out = detail::open_out(dir / "curves" / (cell + ".csv"));
    out << "step,seed,epoch,ratio_aux_orig,upsilon,p_star,loss_ce_o,loss_ce_a\n";
    for (const auto& p : pts) {
      out << p.step << ',' << p.seed << ',' << p.row->epoch << ',' << format_metric(p.row->ratio) << ','
          << format_metric(p.row->upsilon) << ',' << format_metric(p.row->p_star) << ',' << format_metric(p.row->ce_o)
          << ',' << format_metric(p.row->ce_a) << '\n';
    }
  }
}

}  // namespace tab

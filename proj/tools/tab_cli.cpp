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

// Command-line entry points: data generation, the three training stages,
// evaluation, sweeps and the numerical self-checks.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tab/tab.hpp"

namespace fs = std::filesystem;
using tab::Checkpoint;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
};

tab::ExperimentConfig load(const Globals& g) {
  return g.config.empty() ? tab::parse_experiment({}) : tab::load_experiment(g.config);
}

void log_epoch(const std::string& stage, const tab::EpochScore& e) {
  std::fprintf(stderr, "[%s] epoch %d train_loss %.5f dev %.5f", stage.c_str(), e.epoch, e.train_loss, e.dev);
  if (stage != "st") std::fprintf(stderr, " %s %.5f", stage == "asr" ? "ter" : "acc", e.dev_aux);
  std::fprintf(stderr, "\n");
}

fs::path or_default(const std::string& configured, const fs::path& fallback) {
  return configured.empty() ? fallback : fs::path(configured);
}

void save_run(const fs::path& dir, const tab::TrainResult<float>& r) {
  tab::save_checkpoint(dir / "model.ckpt", r.checkpoint);
  tab::write_metrics_csv(dir / "metrics.csv", r.record.rows);
  tab::write_manifest(dir / "manifest.txt", r.record);
}

int gen_data(const Globals& g) {
  tab::ExperimentConfig e = load(g);
  if (g.seed) e.corpus_seed = *g.seed;
  const fs::path dir = or_default(e.corpus_dir, fs::path(g.out) / "corpus");
  const tab::CorpusBundle b = tab::build_corpus(e.corpus, e.corpus_seed);
  tab::write_corpus(b, dir);
  std::printf("wrote corpus (seed %llu) to %s: asr %zu, mt %zu, st_train %zu, st_dev %zu, st_test %zu\n",
              static_cast<unsigned long long>(e.corpus_seed), dir.string().c_str(), b.asr.size(), b.mt.size(),
              b.st_train.size(), b.st_dev.size(), b.st_test.size());
  return 0;
}

tab::CorpusBundle corpus_for(tab::ExperimentConfig& e, const Globals& g) {
  if (e.corpus_dir.empty()) e.corpus_dir = (fs::path(g.out) / "corpus").string();
  return tab::obtain_corpus(e);
}

int pretrain(const Globals& g, tab::Stage stage) {
  tab::ExperimentConfig e = load(g);
  if (g.seed) e.pretrain_seed = *g.seed;
  const tab::CorpusBundle corpus = corpus_for(e, g);
  const tab::ModelConfig mc = tab::resolved_model(e);
  const bool asr = stage == tab::Stage::asr;
  const auto r = asr ? tab::pretrain_asr<float>(corpus, mc, e.asr, e.pretrain_seed, log_epoch)
                     : tab::pretrain_mt<float>(corpus, mc, e.mt, e.pretrain_seed, log_epoch);
  const fs::path dir = fs::path(g.out) / (asr ? "asr" : "mt");
  save_run(dir, r);
  std::printf("%s: best epoch %d, dev %s %.6f, test %s %.6f -> %s\n", asr ? "asr" : "mt", r.record.best_epoch,
              asr ? "ter" : "accuracy", r.record.final_dev, asr ? "ter" : "accuracy", r.record.final_test,
              (dir / "model.ckpt").string().c_str());
  return 0;
}

std::pair<Checkpoint<float>, Checkpoint<float>> pretrained(const tab::ExperimentConfig& e, const Globals& g) {
  const fs::path asr = or_default(e.asr_checkpoint, fs::path(g.out) / "asr" / "model.ckpt");
  const fs::path mt = or_default(e.mt_checkpoint, fs::path(g.out) / "mt" / "model.ckpt");
  return {tab::load_checkpoint<float>(asr), tab::load_checkpoint<float>(mt)};
}

int finetune(const Globals& g) {
  tab::ExperimentConfig e = load(g);
  if (g.seed) e.seed = *g.seed;
  const tab::CorpusBundle corpus = corpus_for(e, g);
  const auto [asr, mt] = pretrained(e, g);
  const auto r = tab::finetune_st<float>(corpus, asr, mt, e.st, e.seed, log_epoch);
  const fs::path dir = fs::path(g.out) / "st";
  save_run(dir, r);
  std::printf("st: best epoch %d (stopped %d), dev BLEU %.4f, test BLEU %.4f -> %s\n", r.record.best_epoch,
              r.record.stop_epoch, r.record.final_dev, r.record.final_test, (dir / "model.ckpt").string().c_str());
  return 0;
}

int evaluate(const Globals& g, const std::string& checkpoint, int beam) {
  tab::ExperimentConfig e = load(g);
  const tab::CorpusBundle corpus = corpus_for(e, g);
  const fs::path path = !checkpoint.empty() ? fs::path(checkpoint)
                                            : or_default(e.st_checkpoint, fs::path(g.out) / "st" / "model.ckpt");
  Checkpoint<float> ck = tab::load_checkpoint<float>(path);
  tab::StModel<float> m{ck.config, std::move(ck.params)};
  const int b = beam > 0 ? beam : e.st.beam;
  const int max_len = 2 * corpus.config.max_len + 2;
  const double dev = tab::evaluate_st(m, corpus.st_dev, b, max_len);
  const double test = tab::evaluate_st(m, corpus.st_test, b, max_len);
  std::printf("checkpoint\t%s\nbeam\t%d\ndev_bleu\t%.6f\ntest_bleu\t%.6f\navg\t%.6f\n", path.string().c_str(), b, dev,
              test, 0.5 * (dev + test));
  return 0;
}

int sweep(const Globals& g) {
  tab::ExperimentConfig e = load(g);
  const tab::CorpusBundle corpus = corpus_for(e, g);
  const tab::ModelConfig mc = tab::resolved_model(e);
  const fs::path asr_path = or_default(e.asr_checkpoint, fs::path(g.out) / "asr" / "model.ckpt");
  const fs::path mt_path = or_default(e.mt_checkpoint, fs::path(g.out) / "mt" / "model.ckpt");
  if (!fs::exists(asr_path)) save_run(asr_path.parent_path(), tab::pretrain_asr<float>(corpus, mc, e.asr, e.pretrain_seed, log_epoch));
  if (!fs::exists(mt_path)) save_run(mt_path.parent_path(), tab::pretrain_mt<float>(corpus, mc, e.mt, e.pretrain_seed, log_epoch));
  const auto asr = tab::load_checkpoint<float>(asr_path);
  const auto mt = tab::load_checkpoint<float>(mt_path);
  const tab::SweepSpec spec = tab::sweep_from(e);
  const tab::SweepOutput res = tab::run_sweep<float>(corpus, asr, mt, e.st, spec, log_epoch);
  const fs::path dir = fs::path(g.out) / "sweep";
  tab::emit_report(dir, res.table, res.runs);
  tab::write_results_tsv(std::cout, res.table);
  int failed = 0;
  for (const auto& r : res.table.rows) failed += r.ok ? 0 : 1;
  if (failed) std::fprintf(stderr, "%d run(s) failed; see %s\n", failed, (dir / "failures.tsv").string().c_str());
  return 0;
}

int grad_check(const Globals& g) {
  bool ok = true;
  for (const auto& c : tab::run_grad_checks(g.seed.value_or(1))) {
    std::cout << c.name << '\n' << c.report;
    ok = ok && c.report.passed;
  }
  return ok ? 0 : 1;
}

int oracle_check(const Globals& g, int instances) {
  const auto s = tab::ctc_oracle_check(instances, g.seed.value_or(1));
  std::printf("instances %d failures %d max_abs_error %.3e %s\n", s.instances, s.failures, s.max_abs_error,
              s.passed() ? "PASS" : "FAIL");
  return s.passed() ? 0 : 1;
}

int average(const Globals& g, const std::vector<std::string>& inputs) {
  std::vector<Checkpoint<float>> cks;
  for (const auto& p : inputs) cks.push_back(tab::load_checkpoint<float>(p));
  const Checkpoint<float> avg = tab::average_checkpoints(cks);
  const fs::path path = fs::path(g.out) / "averaged.ckpt";
  tab::save_checkpoint(path, avg);
  std::printf("averaged %zu checkpoints -> %s\n", cks.size(), path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TAB speech translation toolkit"};
  app.require_subcommand(0, 1);
  Globals g;
  std::uint64_t seed = 0;
  bool print_config = false;
  app.add_option("--config", g.config, "flat key = value config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "seed override for the subcommand");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("--print-config", print_config, "print every config key with its default and exit");

  auto* gen = app.add_subcommand("gen-data", "generate and write the synthetic corpus");
  auto* asr = app.add_subcommand("pretrain-asr", "pre-train the speech encoder and CTC head");
  auto* mt = app.add_subcommand("pretrain-mt", "pre-train the shared text transformer");
  auto* st = app.add_subcommand("finetune-st", "fine-tune the speech translation model with TAB");
  auto* ev = app.add_subcommand("evaluate", "beam-search BLEU of a fine-tuned checkpoint");
  std::string eval_ckpt;
  int eval_beam = 0;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint to score");
  ev->add_option("--beam", eval_beam, "beam size override")->check(CLI::PositiveNumber);
  auto* sw = app.add_subcommand("sweep", "fine-tune every grid cell and seed and write the report");
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient checks");
  auto* oc = app.add_subcommand("ctc-oracle-check", "compare CTC with exhaustive path enumeration");
  int instances = 200;
  oc->add_option("--instances", instances, "random instances")->check(CLI::PositiveNumber)->capture_default_str();
  auto* av = app.add_subcommand("average-ckpts", "average checkpoints into <out>/averaged.ckpt");
  std::vector<std::string> inputs;
  av->add_option("checkpoints", inputs, "checkpoints to average")->required()->check(CLI::ExistingFile);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count()) g.seed = seed;

  try {
    if (print_config) {
      for (const auto& [k, v, doc] : tab::config_reference()) std::printf("%s = %s  # %s\n", k.c_str(), v.c_str(), doc.c_str());
      return 0;
    }
    if (*gen) return gen_data(g);
    if (*asr) return pretrain(g, tab::Stage::asr);
    if (*mt) return pretrain(g, tab::Stage::mt);
    if (*st) return finetune(g);
    if (*ev) return evaluate(g, eval_ckpt, eval_beam);
    if (*sw) return sweep(g);
    if (*gc) return grad_check(g);
    if (*oc) return oracle_check(g, instances);
    if (*av) return average(g, inputs);
    std::cout << app.help();
    return 0;
  } catch (const tab::ConfigError& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
}

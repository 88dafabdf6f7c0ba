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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tab/kv.hpp"

namespace tab {

inline constexpr const char* kMetricsHeader =
    "step,epoch,stage,loss_ce_o,loss_ce_a,loss_ctc,loss_cons,loss_total,ratio_aux_orig,upsilon,p_star,lr,acc_o,acc_a";

// One optimizer step. Fields that do not apply to the stage stay empty.
struct MetricRow {
  long step = 0;
  int epoch = 0;
  std::string stage;
  std::optional<double> ce_o;
  std::optional<double> ce_a;
  std::optional<double> ctc;
  std::optional<double> cons;
  double total = 0.0;
  std::optional<double> ratio;
  std::optional<double> upsilon;
  std::optional<double> p_star;
  double lr = 0.0;
  std::optional<double> acc_o;
  std::optional<double> acc_a;
};

inline std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_metric(const std::optional<double>& v) { return v ? format_metric(*v) : std::string(); }

inline std::string metric_line(const MetricRow& r) {
  std::ostringstream os;
  os << r.step << ',' << r.epoch << ',' << r.stage << ',' << format_metric(r.ce_o) << ',' << format_metric(r.ce_a)
     << ',' << format_metric(r.ctc) << ',' << format_metric(r.cons) << ',' << format_metric(r.total) << ','
     << format_metric(r.ratio) << ',' << format_metric(r.upsilon) << ',' << format_metric(r.p_star) << ','
     << format_metric(r.lr) << ',' << format_metric(r.acc_o) << ',' << format_metric(r.acc_a);
  return os.str();
}

struct EpochScore {
  int epoch = 0;
  double train_loss = 0.0;  // mean total loss over the epoch's steps
  double dev = 0.0;         // the early-stopping metric
  double dev_aux = 0.0;     // stage-specific secondary score (TER, accuracy)
};

struct RunRecord {
  std::string stage;
  std::vector<MetricRow> rows;
  std::vector<EpochScore> epochs;
  int best_epoch = 0;
  double best_dev = 0.0;
  int stop_epoch = 0;
  bool early_stopped = false;
  int convergence_epoch = 0;  // the best-dev epoch
  long skipped_steps = 0;     // steps dropped for a non-finite gradient
  long skipped_utterances = 0;
  double final_dev = 0.0;     // averaged model on dev
  double final_test = 0.0;    // averaged model on test
  io::KeyValues manifest;     // resolved config and seed
};

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << kMetricsHeader << '\n';
  long prev = 0;
  for (const auto& r : rows) {
    if (r.step <= prev) throw std::logic_error("write_metrics_csv: steps must increase strictly");
    prev = r.step;
    out << metric_line(r) << '\n';
  }
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw io::FormatError("cannot write " + path.string());
  write_metrics_csv(out, rows);
}

inline void write_manifest(const std::filesystem::path& path, const RunRecord& rec) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw io::FormatError("cannot write " + path.string());
  io::write_key_values(out, rec.manifest);
  out << "result.best_epoch = " << rec.best_epoch << '\n';
  out << "result.best_dev = " << format_metric(rec.best_dev) << '\n';
  out << "result.stop_epoch = " << rec.stop_epoch << '\n';
  out << "result.early_stopped = " << (rec.early_stopped ? "true" : "false") << '\n';
  out << "result.convergence_epoch = " << rec.convergence_epoch << '\n';
  out << "result.skipped_steps = " << rec.skipped_steps << '\n';
  out << "result.skipped_utterances = " << rec.skipped_utterances << '\n';
  out << "result.final_dev = " << format_metric(rec.final_dev) << '\n';
  out << "result.final_test = " << format_metric(rec.final_test) << '\n';
}

// Halts at the first epoch whose dev metric has not improved on the best
// for `patience` consecutive epochs. Improvement is strict.
class EarlyStopper {
 public:
  EarlyStopper(int patience, bool higher_is_better) : patience_(patience), higher_(higher_is_better) {
    if (patience < 1) throw std::invalid_argument("EarlyStopper: patience must be >= 1");
  }

  // Returns true when training should stop after this epoch.
  bool observe(int epoch, double value) {
    const bool better = !best_epoch_ || (higher_ ? value > best_ : value < best_);
    if (better) {
      best_ = value;
      best_epoch_ = epoch;
      since_ = 0;
      return false;
    }
    return ++since_ >= patience_;
  }

  bool improved_at(int epoch) const { return best_epoch_ == epoch; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  bool higher_;
  double best_ = 0.0;
  int best_epoch_ = 0;
  int since_ = 0;
};

}  // namespace tab

#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gal/data.hpp"

namespace gal {

// Pixel-level confusion counts; pothole (1) is the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

inline ConfusionCounts confusion(const std::vector<int>& pred,
                                 const std::vector<int>& label) {
  if (pred.size() != label.size())
    throw std::invalid_argument("confusion: prediction has " +
                                std::to_string(pred.size()) + " pixels, label " +
                                std::to_string(label.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (label[i]) {
      pred[i] ? ++c.tp : ++c.fn;
    } else {
      pred[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

struct MetricRow {
  double pre = 0, rec = 0, acc = 0, fsc = 0, iou = 0;
};

// The five pixel metrics. Any metric with a zero denominator evaluates to 1
// when tp=fp=fn=0 (nothing to find, nothing claimed) and 0 otherwise.
inline MetricRow metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() <= 0)
    throw std::invalid_argument("metrics_from_counts: empty confusion counts");
  const bool vacuous = c.tp == 0 && c.fp == 0 && c.fn == 0;
  auto ratio = [&](double num, double den) {
    if (den > 0) return num / den;
    return vacuous ? 1.0 : 0.0;
  };
  MetricRow m;
  m.pre = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.rec = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.fsc = ratio(2.0 * m.pre * m.rec, m.pre + m.rec);
  m.iou = ratio(static_cast<double>(c.tp),
                static_cast<double>(c.tp + c.fp + c.fn));
  return m;
}

struct MetricReport {
  std::vector<MetricRow> rows;  // one per fold, in fold order
  MetricRow mean;
};

inline MetricRow mean_of(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("mean_of: no metric rows");
  MetricRow m;
  for (const MetricRow& r : rows) {
    m.pre += r.pre;
    m.rec += r.rec;
    m.acc += r.acc;
    m.fsc += r.fsc;
    m.iou += r.iou;
  }
  const double n = static_cast<double>(rows.size());
  m.pre /= n;
  m.rec /= n;
  m.acc /= n;
  m.fsc /= n;
  m.iou /= n;
  return m;
}

// Trains on everything outside the fold, returns one predicted mask per
// held-out sample, in the fold's order.
using TrainerFn = std::function<std::vector<std::vector<int>>(
    const std::vector<SegSample>& train, const std::vector<SegSample>& test,
    int fold_index)>;

// Cross-validation: per fold, metrics over confusion counts summed across the
// fold's pixels (micro-average), then arithmetic means across folds.
inline MetricReport kfold_run(const std::vector<SegSample>& samples,
                              const FoldSpec& spec, const TrainerFn& trainer) {
  spec.validate(static_cast<int>(samples.size()));
  MetricReport report;
  for (std::size_t f = 0; f < spec.folds.size(); ++f) {
    std::vector<char> held(samples.size(), 0);
    for (int id : spec.folds[f]) held[id] = 1;
    std::vector<SegSample> train, test;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (!held[i]) train.push_back(samples[i]);
    for (int id : spec.folds[f]) test.push_back(samples[id]);
    std::vector<std::vector<int>> preds = trainer(train, test, static_cast<int>(f));
    if (preds.size() != test.size())
      throw std::runtime_error("kfold_run: trainer returned " +
                               std::to_string(preds.size()) + " masks for " +
                               std::to_string(test.size()) + " held-out samples");
    ConfusionCounts fold_counts;
    for (std::size_t i = 0; i < test.size(); ++i)
      fold_counts += confusion(preds[i], test[i].label);
    report.rows.push_back(metrics_from_counts(fold_counts));
  }
  report.mean = mean_of(report.rows);
  return report;
}

inline std::string format3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Structured text document: one `fold=` line per fold plus the mean line.
inline std::string format_report(const MetricReport& r) {
  std::string out;
  for (std::size_t f = 0; f < r.rows.size(); ++f) {
    const MetricRow& m = r.rows[f];
    out += "fold=" + std::to_string(f + 1) + " pre=" + format3(m.pre) +
           " rec=" + format3(m.rec) + " acc=" + format3(m.acc) +
           " fsc=" + format3(m.fsc) + " iou=" + format3(m.iou) + "\n";
  }
  out += "mPre=" + format3(r.mean.pre) + " mRec=" + format3(r.mean.rec) +
         " mAcc=" + format3(r.mean.acc) + " mFsc=" + format3(r.mean.fsc) +
         " mIoU=" + format3(r.mean.iou) + "\n";
  return out;
}

}  // namespace gal

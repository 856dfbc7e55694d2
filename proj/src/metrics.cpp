#include "discnet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace discnet {

namespace {

void require_nonempty(const std::vector<ScoredSample>& preds, const char* who) {
  if (preds.empty()) throw std::invalid_argument(std::string(who) + ": empty predictions");
}

void count_classes(const std::vector<ScoredSample>& preds, int64_t& pos, int64_t& neg) {
  pos = neg = 0;
  for (const auto& p : preds) {
    if (p.label != 0 && p.label != 1) {
      throw std::invalid_argument("metrics: label outside {0,1}");
    }
    (p.label == 1 ? pos : neg) += 1;
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EvalReport confusion_metrics(const std::vector<ScoredSample>& preds, double threshold) {
  require_nonempty(preds, "confusion_metrics");
  if (threshold < 0.0 || threshold > 1.0) {
    throw std::invalid_argument("confusion_metrics: threshold outside [0,1]");
  }
  EvalReport r;
  r.threshold = threshold;
  for (const auto& p : preds) {
    if (p.label != 0 && p.label != 1) {
      throw std::invalid_argument("metrics: label outside {0,1}");
    }
    const bool pred_pos = p.score >= threshold;
    if (pred_pos && p.label == 1) ++r.tp;
    else if (pred_pos && p.label == 0) ++r.fp;
    else if (!pred_pos && p.label == 1) ++r.fn;
    else ++r.tn;
  }
  const int64_t n = r.tp + r.tn + r.fp + r.fn;
  r.acc = static_cast<double>(r.tp + r.tn) / static_cast<double>(n);
  r.recall = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.fpr = (r.tn + r.fp) > 0 ? static_cast<double>(r.fp) / static_cast<double>(r.tn + r.fp) : 0.0;
  r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

double compute_auc(const std::vector<ScoredSample>& preds) {
  require_nonempty(preds, "compute_auc");
  int64_t pos, neg;
  count_classes(preds, pos, neg);
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("compute_auc: needs at least one sample of each class");
  }
  double ordered = 0.0;
  for (const auto& a : preds) {
    if (a.label != 1) continue;
    for (const auto& b : preds) {
      if (b.label != 0) continue;
      if (a.score > b.score) ordered += 1.0;
      else if (a.score == b.score) ordered += 0.5;  // Mann-Whitney tie credit
    }
  }
  return ordered / (static_cast<double>(pos) * static_cast<double>(neg));
}

void curve_points(const std::vector<ScoredSample>& preds,
                  std::vector<RocPoint>& roc, std::vector<PrPoint>& pr) {
  require_nonempty(preds, "curve_points");
  int64_t pos, neg;
  count_classes(preds, pos, neg);
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("curve_points: needs at least one sample of each class");
  }
  std::vector<ScoredSample> sorted = preds;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

  roc.clear();
  pr.clear();
  roc.push_back({sorted.front().score + 1.0, 0.0, 0.0});
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    const double thr = sorted[i].score;
    // absorb the whole tie group at this threshold
    while (i < sorted.size() && sorted[i].score == thr) {
      (sorted[i].label == 1 ? tp : fp) += 1;
      ++i;
    }
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    roc.push_back({thr, fpr, tpr});
    pr.push_back({thr, tpr, static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
}

double compute_auprc(const std::vector<ScoredSample>& preds) {
  require_nonempty(preds, "compute_auprc");
  int64_t pos, neg;
  count_classes(preds, pos, neg);
  if (pos == 0) throw std::invalid_argument("compute_auprc: needs at least one positive");
  if (neg == 0) return 1.0;  // every threshold has precision 1

  std::vector<RocPoint> roc;
  std::vector<PrPoint> pr;
  curve_points(preds, roc, pr);
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& p : pr) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

EvalReport evaluate(const std::vector<ScoredSample>& preds, double threshold) {
  EvalReport r = confusion_metrics(preds, threshold);
  r.auc = compute_auc(preds);
  r.auprc = compute_auprc(preds);
  curve_points(preds, r.roc, r.pr);
  return r;
}

std::vector<ScoredSample> aggregate_by_marker(const std::vector<ScoredSample>& preds) {
  std::map<std::string, std::pair<double, int64_t>> sums;  // marker -> (score sum, n)
  std::map<std::string, int> labels;
  for (const auto& p : preds) {
    auto& [s, n] = sums[p.marker];
    s += p.score;
    n += 1;
    auto it = labels.find(p.marker);
    if (it == labels.end()) labels[p.marker] = p.label;
    else if (it->second != p.label) {
      throw std::invalid_argument("aggregate_by_marker: conflicting labels for marker '" + p.marker + "'");
    }
  }
  std::vector<ScoredSample> out;
  out.reserve(sums.size());
  for (const auto& [marker, sn] : sums) {
    out.push_back({sn.first / static_cast<double>(sn.second), labels[marker], marker});
  }
  return out;
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "threshold,fpr,tpr\n";
  for (const auto& p : roc) f << fmt(p.threshold) << "," << fmt(p.fpr) << "," << fmt(p.tpr) << "\n";
}

void write_pr_csv(const std::string& path, const std::vector<PrPoint>& pr) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "threshold,recall,precision\n";
  for (const auto& p : pr) f << fmt(p.threshold) << "," << fmt(p.recall) << "," << fmt(p.precision) << "\n";
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["threshold"] = r.threshold;
  j["tp"] = r.tp;
  j["tn"] = r.tn;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["acc"] = r.acc;
  j["auc"] = r.auc;
  j["f1"] = r.f1;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["fpr"] = r.fpr;
  j["auprc"] = r.auprc;
  return j.dump(2);
}

}  // namespace discnet

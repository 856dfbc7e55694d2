#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace discnet {

struct ScoredSample {
  double score = 0.0;  // probability of the positive class
  int label = 0;       // 0 or 1
  std::string marker;  // patient group marker
};

struct RocPoint {
  double threshold, fpr, tpr;
};

struct PrPoint {
  double threshold, recall, precision;
};

struct EvalReport {
  double threshold = 0.5;
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  double acc = 0, precision = 0, recall = 0, fpr = 0, f1 = 0;
  double auc = 0, auprc = 0;
  std::vector<RocPoint> roc;
  std::vector<PrPoint> pr;
};

// Exact confusion counts and rates at a threshold; score >= threshold
// predicts positive. Precision and F1 fall back to 0 on empty denominators.
EvalReport confusion_metrics(const std::vector<ScoredSample>& preds, double threshold);

// Pairwise positive-over-negative fraction; ties count half.
double compute_auc(const std::vector<ScoredSample>& preds);

// Step-wise average precision over descending score thresholds.
double compute_auprc(const std::vector<ScoredSample>& preds);

// One point per distinct score plus the (0,0)/(1,1) ROC endpoints.
void curve_points(const std::vector<ScoredSample>& preds,
                  std::vector<RocPoint>& roc, std::vector<PrPoint>& pr);

// Confusion metrics at the threshold plus AUC, AUPRC, and both curves.
EvalReport evaluate(const std::vector<ScoredSample>& preds, double threshold = 0.5);

// Scores averaged per patient marker, label taken from the marker's samples.
std::vector<ScoredSample> aggregate_by_marker(const std::vector<ScoredSample>& preds);

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc);
void write_pr_csv(const std::string& path, const std::vector<PrPoint>& pr);
std::string report_to_json(const EvalReport& report);

}  // namespace discnet

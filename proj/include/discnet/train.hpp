#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "discnet/checkpoint.hpp"
#include "discnet/dataset.hpp"
#include "discnet/metrics.hpp"
#include "discnet/model.hpp"
#include "discnet/optimizer.hpp"

namespace discnet {

struct TrainOptions {
  int epochs = 30;
  int batch_size = 8;
  int aug_multiplier = 1;
  uint64_t seed = 0;
  AdamWConfig opt;
};

struct EpochLog {
  int64_t epoch = 0;
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0, val_auc = 0;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  double best_val_auc = 0;
  int64_t best_epoch = -1;
  int64_t train_samples = 0;  // after augmentation
};

// Stacks the three modality images of each study as input channels.
Tensor studies_to_batch(const std::vector<PatientStudy>& studies,
                        const std::vector<size_t>& indices,
                        const ModelConfig& cfg);
std::vector<int> batch_labels(const std::vector<PatientStudy>& studies,
                              const std::vector<size_t>& indices);

// Scores every study in eval mode (one batch per call chunk).
std::vector<ScoredSample> score_studies(Model& model,
                                        const std::vector<PatientStudy>& studies,
                                        int batch_size);

// Trains one fold. Augments the training studies (validation studies are
// never augmented), logs one CSV line per epoch, and writes best-by-val-AUC
// and last checkpoints when out_dir is non-empty. resume_path, when
// non-empty, restores model, optimizer, and RNG state and continues.
TrainResult train_fold(Model& model, const std::vector<PatientStudy>& train_studies,
                       const std::vector<PatientStudy>& val_studies,
                       const TrainOptions& opts, const std::string& out_dir,
                       const std::string& resume_path = "");

std::string epoch_log_line(const EpochLog& log);

}  // namespace discnet

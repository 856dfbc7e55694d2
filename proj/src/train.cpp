#include "discnet/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "discnet/augment.hpp"

namespace fs = std::filesystem;

namespace discnet {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void copy_image(const GrayImage& img, const ModelConfig& cfg, double* dst,
                const std::string& pid) {
  if (img.height != cfg.input_h || img.width != cfg.input_w) {
    throw DataError("study '" + pid + "': image is " + std::to_string(img.height) + "x" +
                    std::to_string(img.width) + " but the model expects " +
                    std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w));
  }
  std::copy(img.pixels.begin(), img.pixels.end(), dst);
}

}  // namespace

Tensor studies_to_batch(const std::vector<PatientStudy>& studies,
                        const std::vector<size_t>& indices, const ModelConfig& cfg) {
  if (cfg.input_channels != 3) {
    throw std::invalid_argument("studies_to_batch: model must take 3 input channels");
  }
  const int64_t B = static_cast<int64_t>(indices.size());
  const int64_t plane = cfg.input_h * cfg.input_w;
  std::vector<double> vals(static_cast<size_t>(B * 3 * plane));
  for (int64_t b = 0; b < B; ++b) {
    const PatientStudy& st = studies[indices[static_cast<size_t>(b)]];
    copy_image(st.t1_sag, cfg, &vals[static_cast<size_t>((b * 3 + 0) * plane)], st.patient_id);
    copy_image(st.t2_sag, cfg, &vals[static_cast<size_t>((b * 3 + 1) * plane)], st.patient_id);
    copy_image(st.t2_ax, cfg, &vals[static_cast<size_t>((b * 3 + 2) * plane)], st.patient_id);
  }
  return Tensor::from_values({B, 3, cfg.input_h, cfg.input_w}, std::move(vals));
}

std::vector<int> batch_labels(const std::vector<PatientStudy>& studies,
                              const std::vector<size_t>& indices) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (size_t i : indices) labels.push_back(studies[i].label == Label::Ldh ? 1 : 0);
  return labels;
}

std::vector<ScoredSample> score_studies(Model& model,
                                        const std::vector<PatientStudy>& studies,
                                        int batch_size) {
  std::vector<ScoredSample> out;
  out.reserve(studies.size());
  for (size_t start = 0; start < studies.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(studies.size(), start + static_cast<size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    Tensor logits = model.forward(studies_to_batch(studies, idx, model.cfg), /*training=*/false);
    const auto probs = positive_probabilities(logits);
    for (size_t b = 0; b < idx.size(); ++b) {
      const PatientStudy& st = studies[idx[b]];
      out.push_back({probs[b], st.label == Label::Ldh ? 1 : 0, st.group_marker});
    }
  }
  return out;
}

std::string epoch_log_line(const EpochLog& l) {
  std::ostringstream os;
  os << l.epoch << "," << fmt(l.train_loss) << "," << fmt(l.train_acc) << ","
     << fmt(l.val_loss) << "," << fmt(l.val_acc) << "," << fmt(l.val_auc);
  return os.str();
}

TrainResult train_fold(Model& model, const std::vector<PatientStudy>& train_studies,
                       const std::vector<PatientStudy>& val_studies,
                       const TrainOptions& opts, const std::string& out_dir,
                       const std::string& resume_path) {
  if (opts.batch_size < 2 && model.cfg.use_batch_norm) {
    throw std::invalid_argument("train_fold: batch size must be >= 2 with batch norm");
  }
  const std::vector<PatientStudy> pool =
      augment_dataset(train_studies, opts.aug_multiplier, mix_seed(opts.seed, 0xA06));

  std::unique_ptr<AdamW> opt;
  std::mt19937_64 rng(mix_seed(opts.seed, 0x5E0));
  int64_t start_epoch = 0;
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path, model, opt);
    std::istringstream is(ck.rng_state);
    is >> rng;
    start_epoch = ck.epoch;
  } else {
    opt = std::make_unique<AdamW>(model.named_parameters(), opts.opt);
  }

  std::ofstream log_file;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log_file.open(fs::path(out_dir) / "training_log.csv");
    log_file << "epoch,train_loss,train_acc,val_loss,val_acc,val_auc\n";
  }

  TrainResult result;
  result.train_samples = static_cast<int64_t>(pool.size());

  for (int64_t epoch = start_epoch; epoch < opts.epochs; ++epoch) {
    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    // Batches of batch_size; a lone trailing sample joins the previous batch
    // so batch norm always sees at least two samples.
    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opts.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(opts.batch_size));
      batches.emplace_back(order.begin() + static_cast<int64_t>(start),
                           order.begin() + static_cast<int64_t>(end));
    }
    if (batches.size() >= 2 && batches.back().size() == 1 && model.cfg.use_batch_norm) {
      batches[batches.size() - 2].push_back(batches.back()[0]);
      batches.pop_back();
    }

    double loss_sum = 0.0;
    int64_t correct = 0, seen = 0;
    for (const auto& batch : batches) {
      Tensor logits = model.forward(studies_to_batch(pool, batch, model.cfg), /*training=*/true);
      const auto labels = batch_labels(pool, batch);
      Tensor loss = cross_entropy_loss(logits, labels);
      model.clear_grads();
      loss.backward();
      opt->step();

      loss_sum += loss.item() * static_cast<double>(batch.size());
      const auto probs = positive_probabilities(logits);
      for (size_t b = 0; b < batch.size(); ++b) {
        correct += (probs[b] >= 0.5 ? 1 : 0) == labels[b] ? 1 : 0;
      }
      seen += static_cast<int64_t>(batch.size());
    }

    EpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.train_acc = static_cast<double>(correct) / static_cast<double>(seen);

    if (!val_studies.empty()) {
      std::vector<size_t> all(val_studies.size());
      std::iota(all.begin(), all.end(), 0);
      Tensor logits = model.forward(studies_to_batch(val_studies, all, model.cfg), false);
      log.val_loss = cross_entropy_loss(logits, batch_labels(val_studies, all)).item();
      const auto preds = score_studies(model, val_studies, opts.batch_size);
      const EvalReport cm = confusion_metrics(preds, 0.5);
      log.val_acc = cm.acc;
      bool has_pos = false, has_neg = false;
      for (const auto& p : preds) (p.label ? has_pos : has_neg) = true;
      log.val_auc = (has_pos && has_neg) ? compute_auc(preds) : 0.5;
    }
    result.logs.push_back(log);
    if (log_file) {
      log_file << epoch_log_line(log) << "\n";
      log_file.flush();
    }

    if (!out_dir.empty()) {
      std::ostringstream rs;
      rs << rng;
      save_checkpoint((fs::path(out_dir) / "last.ckpt").string(), model, *opt,
                      epoch + 1, rs.str());
      if (log.val_auc > result.best_val_auc || result.best_epoch < 0) {
        result.best_val_auc = log.val_auc;
        result.best_epoch = epoch + 1;
        fs::copy_file(fs::path(out_dir) / "last.ckpt", fs::path(out_dir) / "best.ckpt",
                      fs::copy_options::overwrite_existing);
      }
    } else if (log.val_auc > result.best_val_auc || result.best_epoch < 0) {
      result.best_val_auc = log.val_auc;
      result.best_epoch = epoch + 1;
    }
  }
  return result;
}

}  // namespace discnet

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "discnet/augment.hpp"
#include "discnet/checkpoint.hpp"
#include "discnet/dataset.hpp"
#include "discnet/metrics.hpp"
#include "discnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonOpts {
  std::string manifest;
  std::string out = "run";
  uint64_t seed = 0;
  int epochs = 30;
  int batch_size = 8;
  int folds = 1;
  int fold_index = 0;
  int aug_multiplier = 1;
  double lr = 0.001;
  double weight_decay = 0.01;
  int64_t reduction_r = 16;
  int64_t cardinality = 32;
  int64_t stem_channels = 64;
  int64_t input_size = 224;
  bool no_batch_norm = false;
  bool paper_literal_bias_correction = false;
  double val_fraction = 0.2;
};

discnet::ModelConfig model_config(const CommonOpts& o) {
  discnet::ModelConfig cfg;
  cfg.input_h = cfg.input_w = o.input_size;
  cfg.stem_channels = o.stem_channels;
  cfg.cardinality = o.cardinality;
  cfg.reduction_r = o.reduction_r;
  cfg.use_batch_norm = !o.no_batch_norm;
  return cfg;
}

ordered_json run_config_json(const std::string& command, const CommonOpts& o) {
  ordered_json j;
  j["command"] = command;
  j["manifest"] = o.manifest;
  j["out"] = o.out;
  j["seed"] = o.seed;
  j["epochs"] = o.epochs;
  j["batch_size"] = o.batch_size;
  j["folds"] = o.folds;
  j["fold_index"] = o.fold_index;
  j["aug_multiplier"] = o.aug_multiplier;
  j["lr"] = o.lr;
  j["weight_decay"] = o.weight_decay;
  j["reduction_r"] = o.reduction_r;
  j["cardinality"] = o.cardinality;
  j["stem_channels"] = o.stem_channels;
  j["input_size"] = o.input_size;
  j["no_batch_norm"] = o.no_batch_norm;
  j["paper_literal_bias_correction"] = o.paper_literal_bias_correction;
  j["val_fraction"] = o.val_fraction;
  return j;
}

void write_run_config(const std::string& out_dir, const ordered_json& j) {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "config.json");
  f << j.dump(2) << "\n";
}

void add_model_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--reduction-r", o.reduction_r, "channel attention reduction ratio");
  cmd->add_option("--cardinality", o.cardinality, "grouped-convolution group count");
  cmd->add_option("--stem-channels", o.stem_channels, "stem conv output channels");
  cmd->add_option("--input-size", o.input_size, "model input height/width");
  cmd->add_flag("--no-batch-norm", o.no_batch_norm, "disable batch normalization");
}

int cmd_synth(const CommonOpts& o, int n_patients, double prevalence, int64_t image_size) {
  auto studies = discnet::generate_phantom(n_patients, prevalence, o.seed, image_size);
  const std::string manifest = discnet::write_dataset(o.out, studies);
  std::cout << "wrote " << studies.size() << " studies, manifest " << manifest << "\n";
  return 0;
}

int cmd_augment_preview(const CommonOpts& o, int count) {
  auto studies = discnet::load_manifest(o.manifest);
  if (studies.empty()) throw discnet::DataError("manifest is empty");
  fs::create_directories(o.out);
  const discnet::PatientStudy& st = studies.front();
  for (int k = 0; k < count; ++k) {
    const auto spec = discnet::sample_spec(discnet::mix_seed(o.seed, static_cast<uint64_t>(k)));
    const auto img = discnet::apply_augmentation(st.t1_sag, spec, discnet::mix_seed(spec.rng_seed, 1));
    char name[64];
    std::snprintf(name, sizeof(name), "preview_%03d.pgm", k);
    discnet::write_pgm((fs::path(o.out) / name).string(), img);
  }
  std::cout << "wrote " << count << " previews of patient " << st.patient_id
            << " to " << o.out << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o, const std::string& resume) {
  write_run_config(o.out, run_config_json("train", o));
  auto studies = discnet::load_manifest(o.manifest);
  const auto plan = discnet::split_folds(studies, o.folds, o.val_fraction, o.seed);
  if (o.fold_index < 0 || o.fold_index >= static_cast<int>(plan.folds.size())) {
    throw std::invalid_argument("--fold-index out of range");
  }
  const auto& fold = plan.folds[static_cast<size_t>(o.fold_index)];
  auto train_set = discnet::studies_with_markers(studies, fold.train);
  auto val_set = discnet::studies_with_markers(studies, fold.validation);

  discnet::Model model = discnet::build_model(model_config(o), o.seed);
  discnet::TrainOptions topts;
  topts.epochs = o.epochs;
  topts.batch_size = o.batch_size;
  topts.aug_multiplier = o.aug_multiplier;
  topts.seed = o.seed;
  topts.opt.lr = o.lr;
  topts.opt.weight_decay = o.weight_decay;
  topts.opt.literal_bias_correction = o.paper_literal_bias_correction;

  const auto result = discnet::train_fold(model, train_set, val_set, topts, o.out, resume);
  std::cout << "training samples: " << result.train_samples << "\n";
  if (!result.logs.empty()) {
    const auto& last = result.logs.back();
    std::cout << "final epoch " << last.epoch << ": train_acc " << last.train_acc
              << ", val_acc " << last.val_acc << ", val_auc " << last.val_auc << "\n";
  }
  std::cout << "best val AUC " << result.best_val_auc << " at epoch " << result.best_epoch << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint) {
  write_run_config(o.out, run_config_json("eval", o));
  auto studies = discnet::load_manifest(o.manifest);
  discnet::Model model;
  std::unique_ptr<discnet::AdamW> opt;
  discnet::load_checkpoint(checkpoint, model, opt);

  const auto preds = discnet::score_studies(model, studies, o.batch_size);
  const auto report = discnet::evaluate(preds, 0.5);
  const auto by_patient = discnet::evaluate(discnet::aggregate_by_marker(preds), 0.5);

  fs::create_directories(o.out);
  {
    std::ofstream f(fs::path(o.out) / "metrics.json");
    ordered_json j;
    j["per_image"] = ordered_json::parse(discnet::report_to_json(report));
    j["per_patient"] = ordered_json::parse(discnet::report_to_json(by_patient));
    f << j.dump(2) << "\n";
  }
  discnet::write_roc_csv((fs::path(o.out) / "roc.csv").string(), report.roc);
  discnet::write_pr_csv((fs::path(o.out) / "pr.csv").string(), report.pr);
  std::cout << discnet::report_to_json(report) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-attention grouped-convolution MRI classifier"};
  app.require_subcommand(1);
  CommonOpts o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic phantom dataset");
  int n_patients = 20;
  double prevalence = 0.63;
  int64_t image_size = 64;
  synth->add_option("--n-patients", n_patients, "number of patients");
  synth->add_option("--prevalence", prevalence, "positive-class fraction");
  synth->add_option("--image-size", image_size, "image side length");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--seed", o.seed, "RNG seed");

  auto* preview = app.add_subcommand("augment-preview", "write augmented sample images");
  int preview_count = 8;
  preview->add_option("--manifest", o.manifest, "dataset manifest")->required();
  preview->add_option("--out", o.out, "output directory")->required();
  preview->add_option("--count", preview_count, "number of previews");
  preview->add_option("--seed", o.seed, "RNG seed");

  auto* train = app.add_subcommand("train", "train the classifier");
  std::string resume;
  train->add_option("--manifest", o.manifest, "dataset manifest")->required();
  train->add_option("--out", o.out, "run output directory")->required();
  train->add_option("--epochs", o.epochs, "training epochs");
  train->add_option("--batch-size", o.batch_size, "batch size");
  train->add_option("--folds", o.folds, "cross-validation fold count");
  train->add_option("--fold-index", o.fold_index, "which fold to train");
  train->add_option("--val-fraction", o.val_fraction, "validation fraction when folds=1");
  train->add_option("--aug-multiplier", o.aug_multiplier, "augmentation multiplier");
  train->add_option("--lr", o.lr, "learning rate");
  train->add_option("--weight-decay", o.weight_decay, "decoupled weight decay");
  train->add_flag("--paper-literal-bias-correction", o.paper_literal_bias_correction,
                  "use exponent-free moment bias correction");
  train->add_option("--resume", resume, "checkpoint to resume from");
  add_model_flags(train, o);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint;
  eval->add_option("--manifest", o.manifest, "dataset manifest")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--out", o.out, "report output directory")->required();
  eval->add_option("--batch-size", o.batch_size, "evaluation batch size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, n_patients, prevalence, image_size);
    if (preview->parsed()) return cmd_augment_preview(o, preview_count);
    if (train->parsed()) return cmd_train(o, resume);
    if (eval->parsed()) return cmd_eval(o, checkpoint);
  } catch (const discnet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const discnet::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

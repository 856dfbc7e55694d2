#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "discnet/study.hpp"

namespace discnet {

// Manifest / image / label problems; the CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Binary PGM (P5), 8- or 16-bit, values normalized to [0,1] on read.
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& img);

// Manifest: JSON array of studies, each
// {patient_id, group_marker, label: "ldh"|"healthy", age?, images:
//  {t1_sag, t2_sag, t2_ax: path relative to the manifest}}.
std::vector<PatientStudy> load_manifest(const std::string& path);

// Writes every study's PGM files plus a manifest referencing them under
// out_dir. Returns the manifest path.
std::string write_dataset(const std::string& out_dir,
                          const std::vector<PatientStudy>& studies);

struct FoldSplit {
  std::vector<std::string> train;       // patient markers
  std::vector<std::string> validation;  // patient markers
};

struct SplitPlan {
  std::vector<FoldSplit> folds;
};

// Splits by patient marker, stratified by label, deterministic per seed.
// With folds >= 2, validation chunks partition the patients; val_fraction
// applies when folds == 1.
SplitPlan split_folds(const std::vector<PatientStudy>& studies, int folds,
                      double val_fraction, uint64_t seed);

std::vector<PatientStudy> studies_with_markers(const std::vector<PatientStudy>& studies,
                                               const std::vector<std::string>& markers);

// Procedural stand-in data: a bright vertebral band with periodic disc gaps;
// positive studies carry a posterior bulge at one of the two lowest discs,
// consistent across the three pseudo-modalities. Global brightness and band
// geometry jitter are label-independent, so intensity statistics alone do
// not separate the classes.
std::vector<PatientStudy> generate_phantom(int n_patients, double prevalence,
                                           uint64_t seed, int64_t image_size = 64);

}  // namespace discnet

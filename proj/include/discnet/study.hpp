#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace discnet {

// Single-channel image, pixels normalized to [0,1], row-major.
struct GrayImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> pixels;

  double& at(int64_t y, int64_t x) { return pixels[static_cast<size_t>(y * width + x)]; }
  double at(int64_t y, int64_t x) const { return pixels[static_cast<size_t>(y * width + x)]; }
};

enum class Label { Healthy = 0, Ldh = 1 };

// One subject's grouped MRI triplet. group_marker ties every record of a
// patient together; splits never separate records sharing a marker.
struct PatientStudy {
  std::string patient_id;
  std::string group_marker;
  GrayImage t1_sag;
  GrayImage t2_sag;
  GrayImage t2_ax;
  Label label = Label::Healthy;
  std::optional<int> age;
  bool validation_tagged = false;
};

}  // namespace discnet

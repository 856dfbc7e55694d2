#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "discnet/attention.hpp"
#include "discnet/layers.hpp"
#include "discnet/tensor.hpp"

namespace discnet {

struct ModelConfig {
  int64_t input_channels = 3;  // one channel per MRI modality
  int64_t input_h = 224;
  int64_t input_w = 224;
  int64_t stem_channels = 64;  // stem conv: 7x7, stride 2
  std::vector<int64_t> stage_identity_counts = {2, 3, 5, 3};
  std::vector<int64_t> stage_width_multipliers = {1, 2, 4, 8};
  int64_t cardinality = 32;
  int64_t reduction_r = 16;
  int64_t spatial_kernel = 7;
  bool use_batch_norm = true;
  int64_t num_classes = 2;
  std::vector<int64_t> mlp_hidden = {256};

  void validate() const;
  // Bottleneck width of stage i (grouped conv channels).
  int64_t stage_width(size_t i) const { return stem_channels * stage_width_multipliers[i]; }
  // Output channels of stage i.
  int64_t stage_out(size_t i) const { return 2 * stage_width(i); }
};

// Pre-activation bottleneck: 1x1 reduce -> 3x3 grouped -> 1x1 expand, with a
// projection shortcut when downsampling. Zeroing the residual branch makes
// an identity block the exact identity map.
struct ResidualBlock {
  bool downsample = false;
  Conv2dParams reduce, grouped, expand;
  Conv2dParams shortcut;  // defined only when downsample
  BatchNormState bn1, bn2, bn3;
};

struct DualAttention {
  ChannelAttentionParams channel;
  SpatialAttentionParams spatial;
};

class Model {
 public:
  ModelConfig cfg;
  Conv2dParams stem;
  BatchNormState stem_bn;
  DualAttention attn_front;                       // after the stem conv
  std::vector<std::vector<ResidualBlock>> stages;  // 4 stages
  BatchNormState head_bn;                          // pre-activation closer
  DualAttention attn_back;                         // after the last conv stage
  std::vector<LinearParams> mlp;                   // hidden layers + logits

  Tensor forward(const Tensor& x, bool training);

  // Stable name -> parameter registry, in construction order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Batch-norm running statistics (persistent non-trainable state).
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();

  void clear_grads();
};

Model build_model(const ModelConfig& cfg, uint64_t seed);

// Mean softmax cross-entropy over the batch; labels in {0,1}.
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

// Probability of the positive class (index 1) per batch row.
std::vector<double> positive_probabilities(const Tensor& logits);

int64_t count_parameters(const Model& m);
// One row per parameter tensor: (name, element count).
std::vector<std::pair<std::string, int64_t>> parameter_table(const Model& m);

}  // namespace discnet

#pragma once

#include "discnet/tensor.hpp"

namespace discnet {

// Grouped 2-d convolution parameters. weight is [out, in/groups, kh, kw];
// bias ([out]) may be left undefined.
struct Conv2dParams {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kh = 1, kw = 1;
  int64_t sh = 1, sw = 1;
  int64_t ph = 0, pw = 0;
  int64_t groups = 1;
  Tensor weight;
  Tensor bias;

  void validate() const;
  int64_t weight_count() const;
};

struct LinearParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

enum class PoolMode { Avg, Max };
enum class ActKind { Relu, Sigmoid };

// Zero padding; output extents H' = floor((H + 2ph - kh)/sh) + 1, same for W.
// Group g reads only its slice of input channels; group outputs are
// concatenated along the channel axis. Accumulation order per output pixel:
// in-group channel, then kernel row, then kernel column.
Tensor grouped_conv2d(const Tensor& x, const Conv2dParams& p);

// z_c = (1/(H*W)) * sum_ij x_c(i,j); [B,C,H,W] -> [B,C,1,1].
Tensor global_avg_pool(const Tensor& x);

// Per-pixel mean or max across channels; [B,C,H,W] -> [B,1,H,W].
// Max gradient flows to the lowest-index maximal channel.
Tensor channel_pool(const Tensor& x, PoolMode mode);

// x [B,in] -> x * weight^T + bias, [B,out].
Tensor linear(const Tensor& x, const LinearParams& p);

Tensor activation(const Tensor& x, ActKind kind);

// Per-channel batch normalization with learned scale/shift and running
// statistics for eval mode.
struct BatchNormState {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState make(int64_t channels);
};

Tensor batch_norm(const Tensor& x, BatchNormState& st, bool training);

}  // namespace discnet

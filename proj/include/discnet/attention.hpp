#pragma once

#include "discnet/layers.hpp"
#include "discnet/tensor.hpp"

namespace discnet {

// Channel attention weights: squeeze (global average pool), excitation
// through a reduction bottleneck, scale. No biases, so the parameter count
// is exactly 2*c^2/r.
struct ChannelAttentionParams {
  int64_t c = 0;
  int64_t r = 1;
  Tensor w1;  // [c/r, c]
  Tensor w2;  // [c, c/r]

  static ChannelAttentionParams make(int64_t c, int64_t r);
  void validate() const;
  int64_t parameter_count() const { return w1.numel() + w2.numel(); }
};

// Spatial attention: a 1->1 channel conv over each of the channel-pooled
// maps, summed, squashed. Odd kernel with (k-1)/2 padding preserves extent.
struct SpatialAttentionParams {
  Conv2dParams conv_avg;
  Conv2dParams conv_max;

  static SpatialAttentionParams make(int64_t kernel);
  void validate() const;
};

Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p);

// Returns the excitation vector s [B,C] instead of the scaled map, for
// inspection and tests.
Tensor channel_attention_weights(const Tensor& x, const ChannelAttentionParams& p);

Tensor spatial_attention(const Tensor& f, const SpatialAttentionParams& p);

// The [B,1,H,W] map M alone.
Tensor spatial_attention_map(const Tensor& f, const SpatialAttentionParams& p);

// Channel attention followed by spatial attention.
Tensor dual_attention_block(const Tensor& x, const ChannelAttentionParams& cp,
                            const SpatialAttentionParams& sp);

}  // namespace discnet

#include "discnet/attention.hpp"

namespace discnet {

ChannelAttentionParams ChannelAttentionParams::make(int64_t c, int64_t r) {
  if (c <= 0 || r <= 0 || c % r != 0) {
    throw std::invalid_argument("channel attention: r must divide c (got c=" +
                                std::to_string(c) + ", r=" + std::to_string(r) + ")");
  }
  ChannelAttentionParams p;
  p.c = c;
  p.r = r;
  p.w1 = Tensor::zeros({c / r, c}, /*requires_grad=*/true);
  p.w2 = Tensor::zeros({c, c / r}, /*requires_grad=*/true);
  return p;
}

void ChannelAttentionParams::validate() const {
  if (c <= 0 || r <= 0 || c % r != 0) {
    throw std::invalid_argument("channel attention: invalid (c, r)");
  }
  if (!w1.defined() || w1.shape() != Shape{c / r, c} ||
      !w2.defined() || w2.shape() != Shape{c, c / r}) {
    throw std::invalid_argument("channel attention: weight shapes must be [c/r,c] and [c,c/r]");
  }
}

Tensor channel_attention_weights(const Tensor& x, const ChannelAttentionParams& p) {
  p.validate();
  if (x.rank() != 4 || x.shape()[1] != p.c) {
    throw std::invalid_argument("channel attention: input channels do not match c");
  }
  const int64_t B = x.shape()[0];
  Tensor z = reshape(global_avg_pool(x), {B, p.c});       // squeeze
  Tensor h = relu(matmul(z, transpose(p.w1)));            // [B, c/r]
  return sigmoid(matmul(h, transpose(p.w2)));             // excitation, [B, c]
}

Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p) {
  Tensor s = channel_attention_weights(x, p);
  const int64_t B = x.shape()[0];
  return mul(x, reshape(s, {B, p.c, 1, 1}));              // scale
}

SpatialAttentionParams SpatialAttentionParams::make(int64_t kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("spatial attention: kernel must be odd");
  }
  auto mk = [&] {
    Conv2dParams c;
    c.in_channels = 1;
    c.out_channels = 1;
    c.kh = c.kw = kernel;
    c.ph = c.pw = (kernel - 1) / 2;
    c.weight = Tensor::zeros({1, 1, kernel, kernel}, /*requires_grad=*/true);
    c.bias = Tensor::zeros({1}, /*requires_grad=*/true);
    return c;
  };
  SpatialAttentionParams p;
  p.conv_avg = mk();
  p.conv_max = mk();
  return p;
}

void SpatialAttentionParams::validate() const {
  conv_avg.validate();
  conv_max.validate();
  if (conv_avg.in_channels != 1 || conv_avg.out_channels != 1 ||
      conv_max.in_channels != 1 || conv_max.out_channels != 1) {
    throw std::invalid_argument("spatial attention: convs must map 1 -> 1 channel");
  }
  if (conv_avg.kh % 2 == 0 || conv_avg.ph != (conv_avg.kh - 1) / 2 ||
      conv_max.kh % 2 == 0 || conv_max.ph != (conv_max.kh - 1) / 2) {
    throw std::invalid_argument("spatial attention: kernel must be odd with (k-1)/2 padding");
  }
}

Tensor spatial_attention_map(const Tensor& f, const SpatialAttentionParams& p) {
  p.validate();
  Tensor avg = grouped_conv2d(channel_pool(f, PoolMode::Avg), p.conv_avg);
  Tensor mx = grouped_conv2d(channel_pool(f, PoolMode::Max), p.conv_max);
  return sigmoid(add(avg, mx));
}

Tensor spatial_attention(const Tensor& f, const SpatialAttentionParams& p) {
  return mul(f, spatial_attention_map(f, p));
}

Tensor dual_attention_block(const Tensor& x, const ChannelAttentionParams& cp,
                            const SpatialAttentionParams& sp) {
  return spatial_attention(channel_attention(x, cp), sp);
}

}  // namespace discnet

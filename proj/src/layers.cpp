#include "discnet/layers.hpp"

#include <algorithm>
#include <cmath>

namespace discnet {

void Conv2dParams::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || groups <= 0) {
    throw std::invalid_argument("conv2d: channel/group counts must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw std::invalid_argument("conv2d: channels not divisible by groups");
  }
  Shape expect = {out_channels, in_channels / groups, kh, kw};
  if (!weight.defined() || weight.shape() != expect) {
    throw std::invalid_argument("conv2d: weight shape must be " + shape_str(expect));
  }
  if (bias.defined() && bias.shape() != Shape{out_channels}) {
    throw std::invalid_argument("conv2d: bias shape must be [out_channels]");
  }
}

int64_t Conv2dParams::weight_count() const {
  return out_channels * (in_channels / groups) * kh * kw +
         (bias.defined() ? out_channels : 0);
}

Tensor grouped_conv2d(const Tensor& x, const Conv2dParams& p) {
  p.validate();
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be [B,C,H,W]");
  const int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (C != p.in_channels) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(C) +
                                " channels, expected " + std::to_string(p.in_channels));
  }
  const int64_t Ho = (H + 2 * p.ph - p.kh) / p.sh + 1;
  const int64_t Wo = (W + 2 * p.pw - p.kw) / p.sw + 1;
  if (H + 2 * p.ph < p.kh || W + 2 * p.pw < p.kw) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
  const int64_t Cg = p.in_channels / p.groups;   // input channels per group
  const int64_t Og = p.out_channels / p.groups;  // output channels per group

  const auto& xv = x.values();
  const auto& wv = p.weight.values();
  const bool has_bias = p.bias.defined();

  std::vector<double> out(static_cast<size_t>(B * p.out_channels * Ho * Wo), 0.0);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t oc = 0; oc < p.out_channels; ++oc) {
      const int64_t g = oc / Og;
      const double bias = has_bias ? p.bias.value_at(oc) : 0.0;
      for (int64_t oh = 0; oh < Ho; ++oh) {
        for (int64_t ow = 0; ow < Wo; ++ow) {
          double acc = bias;
          for (int64_t ic = 0; ic < Cg; ++ic) {
            const int64_t c = g * Cg + ic;
            for (int64_t r = 0; r < p.kh; ++r) {
              const int64_t ih = oh * p.sh - p.ph + r;
              if (ih < 0 || ih >= H) continue;
              const double* xrow = &xv[static_cast<size_t>(((b * C + c) * H + ih) * W)];
              const double* wrow = &wv[static_cast<size_t>(((oc * Cg + ic) * p.kh + r) * p.kw)];
              for (int64_t s = 0; s < p.kw; ++s) {
                const int64_t iw = ow * p.sw - p.pw + s;
                if (iw < 0 || iw >= W) continue;
                acc += xrow[iw] * wrow[s];
              }
            }
          }
          out[static_cast<size_t>(((b * p.out_channels + oc) * Ho + oh) * Wo + ow)] = acc;
        }
      }
    }
  }

  auto x_impl = x.impl();
  auto w_impl = p.weight.impl();
  auto b_impl = has_bias ? p.bias.impl() : nullptr;
  Conv2dParams geom = p;  // copy of the geometry for the backward closure
  auto backward = [B, C, H, W, Ho, Wo, Cg, Og, geom, x_impl, w_impl, b_impl](
                      const std::vector<double>& g, GradMap& flow) {
    std::vector<double>* gx = x_impl->requires_grad || x_impl->backward_fn
                                  ? &flow_at(flow, x_impl.get())
                                  : nullptr;
    auto& gw = flow_at(flow, w_impl.get());
    std::vector<double>* gb = b_impl ? &flow_at(flow, b_impl.get()) : nullptr;

    const auto& xv = x_impl->values;
    const auto& wv = w_impl->values;
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t oc = 0; oc < geom.out_channels; ++oc) {
        const int64_t grp = oc / Og;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const double go = g[static_cast<size_t>(((b * geom.out_channels + oc) * Ho + oh) * Wo + ow)];
            if (gb) (*gb)[static_cast<size_t>(oc)] += go;
            for (int64_t ic = 0; ic < Cg; ++ic) {
              const int64_t c = grp * Cg + ic;
              for (int64_t r = 0; r < geom.kh; ++r) {
                const int64_t ih = oh * geom.sh - geom.ph + r;
                if (ih < 0 || ih >= H) continue;
                const size_t xoff = static_cast<size_t>(((b * C + c) * H + ih) * W);
                const size_t woff = static_cast<size_t>(((oc * Cg + ic) * geom.kh + r) * geom.kw);
                for (int64_t s = 0; s < geom.kw; ++s) {
                  const int64_t iw = ow * geom.sw - geom.pw + s;
                  if (iw < 0 || iw >= W) continue;
                  gw[woff + static_cast<size_t>(s)] += go * xv[xoff + static_cast<size_t>(iw)];
                  if (gx) (*gx)[xoff + static_cast<size_t>(iw)] += go * wv[woff + static_cast<size_t>(s)];
                }
              }
            }
          }
        }
      }
    }
  };

  std::vector<Tensor> parents = {x, p.weight};
  if (has_bias) parents.push_back(p.bias);
  return Tensor::from_op("grouped_conv2d", {B, p.out_channels, Ho, Wo},
                         std::move(out), std::move(parents), std::move(backward));
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: input must be [B,C,H,W]");
  const int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const double inv = 1.0 / static_cast<double>(H * W);
  std::vector<double> out(static_cast<size_t>(B * C), 0.0);
  const auto& xv = x.values();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    double s = 0.0;
    for (int64_t i = 0; i < H * W; ++i) s += xv[static_cast<size_t>(bc * H * W + i)];
    out[static_cast<size_t>(bc)] = s * inv;
  }
  auto x_impl = x.impl();
  auto backward = [B, C, H, W, inv, x_impl](const std::vector<double>& g, GradMap& flow) {
    auto& gx = flow_at(flow, x_impl.get());
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const double d = g[static_cast<size_t>(bc)] * inv;
      for (int64_t i = 0; i < H * W; ++i) gx[static_cast<size_t>(bc * H * W + i)] += d;
    }
  };
  return Tensor::from_op("global_avg_pool", {B, C, 1, 1}, std::move(out), {x},
                         std::move(backward));
}

Tensor channel_pool(const Tensor& x, PoolMode mode) {
  if (x.rank() != 4) throw std::invalid_argument("channel_pool: input must be [B,C,H,W]");
  const int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int64_t HW = H * W;
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(B * HW), 0.0);
  std::vector<int64_t> argmax;
  if (mode == PoolMode::Max) argmax.resize(static_cast<size_t>(B * HW));

  for (int64_t b = 0; b < B; ++b) {
    for (int64_t i = 0; i < HW; ++i) {
      if (mode == PoolMode::Avg) {
        double s = 0.0;
        for (int64_t c = 0; c < C; ++c) s += xv[static_cast<size_t>((b * C + c) * HW + i)];
        out[static_cast<size_t>(b * HW + i)] = s / static_cast<double>(C);
      } else {
        double best = xv[static_cast<size_t>(b * C * HW + i)];
        int64_t bc = 0;
        for (int64_t c = 1; c < C; ++c) {
          const double v = xv[static_cast<size_t>((b * C + c) * HW + i)];
          if (v > best) { best = v; bc = c; }  // ties keep the lowest index
        }
        out[static_cast<size_t>(b * HW + i)] = best;
        argmax[static_cast<size_t>(b * HW + i)] = bc;
      }
    }
  }
  auto x_impl = x.impl();
  auto backward = [B, C, HW, mode, argmax = std::move(argmax), x_impl](
                      const std::vector<double>& g, GradMap& flow) {
    auto& gx = flow_at(flow, x_impl.get());
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t i = 0; i < HW; ++i) {
        const double go = g[static_cast<size_t>(b * HW + i)];
        if (mode == PoolMode::Avg) {
          const double d = go / static_cast<double>(C);
          for (int64_t c = 0; c < C; ++c) gx[static_cast<size_t>((b * C + c) * HW + i)] += d;
        } else {
          const int64_t c = argmax[static_cast<size_t>(b * HW + i)];
          gx[static_cast<size_t>((b * C + c) * HW + i)] += go;
        }
      }
    }
  };
  return Tensor::from_op("channel_pool", {B, 1, H, W}, std::move(out), {x},
                         std::move(backward));
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  if (x.rank() != 2) throw std::invalid_argument("linear: input must be [B,in]");
  if (!p.weight.defined() || p.weight.rank() != 2 || p.weight.shape()[1] != x.shape()[1]) {
    throw std::invalid_argument("linear: weight width does not match input width");
  }
  Tensor y = matmul(x, transpose(p.weight));
  if (p.bias.defined()) {
    y = add(y, reshape(p.bias, {1, p.bias.numel()}));
  }
  return y;
}

Tensor activation(const Tensor& x, ActKind kind) {
  return kind == ActKind::Relu ? relu(x) : sigmoid(x);
}

BatchNormState BatchNormState::make(int64_t channels) {
  BatchNormState st;
  st.gamma = Tensor::full({channels}, 1.0, /*requires_grad=*/true);
  st.beta = Tensor::zeros({channels}, /*requires_grad=*/true);
  st.running_mean.assign(static_cast<size_t>(channels), 0.0);
  st.running_var.assign(static_cast<size_t>(channels), 1.0);
  return st;
}

Tensor batch_norm(const Tensor& x, BatchNormState& st, bool training) {
  if (x.rank() != 4) throw std::invalid_argument("batch_norm: input must be [B,C,H,W]");
  const int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (static_cast<int64_t>(st.running_mean.size()) != C) {
    throw std::invalid_argument("batch_norm: state channel count mismatch");
  }
  if (training && B < 2) {
    throw std::invalid_argument("batch_norm: training mode needs batch size >= 2");
  }
  const int64_t HW = H * W;
  const int64_t N = B * HW;  // per-channel sample count
  const auto& xv = x.values();

  std::vector<double> mean(static_cast<size_t>(C)), var(static_cast<size_t>(C));
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i) s += xv[static_cast<size_t>((b * C + c) * HW + i)];
      mean[static_cast<size_t>(c)] = s / static_cast<double>(N);
      double v = 0.0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i) {
          const double d = xv[static_cast<size_t>((b * C + c) * HW + i)] - mean[static_cast<size_t>(c)];
          v += d * d;
        }
      var[static_cast<size_t>(c)] = v / static_cast<double>(N);
      st.running_mean[static_cast<size_t>(c)] =
          (1.0 - st.momentum) * st.running_mean[static_cast<size_t>(c)] +
          st.momentum * mean[static_cast<size_t>(c)];
      st.running_var[static_cast<size_t>(c)] =
          (1.0 - st.momentum) * st.running_var[static_cast<size_t>(c)] +
          st.momentum * var[static_cast<size_t>(c)];
    }
  } else {
    mean = st.running_mean;
    var = st.running_var;
  }

  std::vector<double> inv_std(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c)
    inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + st.eps);

  std::vector<double> xhat(xv.size());
  std::vector<double> out(xv.size());
  const auto& gv = st.gamma.values();
  const auto& bv = st.beta.values();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < HW; ++i) {
        const size_t idx = static_cast<size_t>((b * C + c) * HW + i);
        xhat[idx] = (xv[idx] - mean[static_cast<size_t>(c)]) * inv_std[static_cast<size_t>(c)];
        out[idx] = gv[static_cast<size_t>(c)] * xhat[idx] + bv[static_cast<size_t>(c)];
      }

  auto x_impl = x.impl();
  auto g_impl = st.gamma.impl();
  auto b_impl = st.beta.impl();
  auto backward = [B, C, HW, N, training, xhat = std::move(xhat),
                   inv_std = std::move(inv_std), x_impl, g_impl, b_impl](
                      const std::vector<double>& g, GradMap& flow) {
    auto& ggamma = flow_at(flow, g_impl.get());
    auto& gbeta = flow_at(flow, b_impl.get());
    auto& gx = flow_at(flow, x_impl.get());
    const auto& gammav = g_impl->values;
    for (int64_t c = 0; c < C; ++c) {
      double sum_g = 0.0, sum_gxh = 0.0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i) {
          const size_t idx = static_cast<size_t>((b * C + c) * HW + i);
          sum_g += g[idx];
          sum_gxh += g[idx] * xhat[idx];
        }
      ggamma[static_cast<size_t>(c)] += sum_gxh;
      gbeta[static_cast<size_t>(c)] += sum_g;
      const double gam = gammav[static_cast<size_t>(c)];
      const double istd = inv_std[static_cast<size_t>(c)];
      for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i) {
          const size_t idx = static_cast<size_t>((b * C + c) * HW + i);
          if (training) {
            // batch statistics depend on x
            gx[idx] += gam * istd *
                       (g[idx] - sum_g / static_cast<double>(N) -
                        xhat[idx] * sum_gxh / static_cast<double>(N));
          } else {
            gx[idx] += gam * istd * g[idx];
          }
        }
    }
  };
  return Tensor::from_op("batch_norm", x.shape(), std::move(out),
                         {x, st.gamma, st.beta}, std::move(backward));
}

}  // namespace discnet

#include "discnet/model.hpp"

#include <cmath>
#include <random>

namespace discnet {

void ModelConfig::validate() const {
  if (stage_identity_counts.size() != 4) {
    throw std::invalid_argument("config: stage_identity_counts must have length 4");
  }
  if (stage_width_multipliers.size() != 4) {
    throw std::invalid_argument("config: stage_width_multipliers must have length 4");
  }
  for (int64_t c : stage_identity_counts) {
    if (c < 1) throw std::invalid_argument("config: empty stage");
  }
  if (input_channels < 1 || stem_channels < 1 || cardinality < 1 || reduction_r < 1) {
    throw std::invalid_argument("config: counts must be positive");
  }
  if (input_h < 32 || input_w < 32) {
    throw std::invalid_argument("config: input size must be at least 32x32 (five halvings)");
  }
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0) {
    throw std::invalid_argument("config: spatial kernel must be odd");
  }
  if (num_classes < 2) throw std::invalid_argument("config: num_classes must be >= 2");
  if (stem_channels % reduction_r != 0) {
    throw std::invalid_argument("config: reduction r must divide the stem channel count");
  }
  for (size_t i = 0; i < 4; ++i) {
    if (stage_width(i) % cardinality != 0) {
      throw std::invalid_argument("config: stage width not divisible by cardinality");
    }
  }
  if (stage_out(3) % reduction_r != 0) {
    throw std::invalid_argument("config: reduction r must divide the final channel count");
  }
}

namespace {

Conv2dParams make_conv(int64_t in, int64_t out, int64_t k, int64_t stride,
                       int64_t pad, int64_t groups, bool with_bias) {
  Conv2dParams c;
  c.in_channels = in;
  c.out_channels = out;
  c.kh = c.kw = k;
  c.sh = c.sw = stride;
  c.ph = c.pw = pad;
  c.groups = groups;
  c.weight = Tensor::zeros({out, in / groups, k, k}, /*requires_grad=*/true);
  if (with_bias) c.bias = Tensor::zeros({out}, /*requires_grad=*/true);
  return c;
}

ResidualBlock make_block(int64_t in, int64_t width, int64_t out, int64_t cardinality,
                         bool downsample, bool conv_bias) {
  ResidualBlock b;
  b.downsample = downsample;
  const int64_t stride = downsample ? 2 : 1;
  b.reduce = make_conv(in, width, 1, 1, 0, 1, conv_bias);
  b.grouped = make_conv(width, width, 3, stride, 1, cardinality, conv_bias);
  b.expand = make_conv(width, out, 1, 1, 0, 1, conv_bias);
  if (downsample) b.shortcut = make_conv(in, out, 1, stride, 0, 1, conv_bias);
  b.bn1 = BatchNormState::make(in);
  b.bn2 = BatchNormState::make(width);
  b.bn3 = BatchNormState::make(width);
  return b;
}

DualAttention make_attention(int64_t channels, int64_t r, int64_t kernel) {
  DualAttention a;
  a.channel = ChannelAttentionParams::make(channels, r);
  a.spatial = SpatialAttentionParams::make(kernel);
  return a;
}

Tensor block_forward(const Tensor& x, ResidualBlock& b, bool use_bn, bool training) {
  Tensor shortcut = b.downsample ? grouped_conv2d(x, b.shortcut) : x;
  Tensor h = use_bn ? batch_norm(x, b.bn1, training) : x;
  h = relu(h);
  h = grouped_conv2d(h, b.reduce);
  if (use_bn) h = batch_norm(h, b.bn2, training);
  h = relu(h);
  h = grouped_conv2d(h, b.grouped);
  if (use_bn) h = batch_norm(h, b.bn3, training);
  h = relu(h);
  h = grouped_conv2d(h, b.expand);
  return add(shortcut, h);
}

}  // namespace

Tensor Model::forward(const Tensor& x, bool training) {
  if (x.rank() != 4 || x.shape()[1] != cfg.input_channels) {
    throw std::invalid_argument("forward: input must be [B," +
                                std::to_string(cfg.input_channels) + ",H,W]");
  }
  auto in_layer = [](const char* name, auto&& fn) -> Tensor {
    try {
      return fn();
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in layer '" + name + "'");
    }
  };

  Tensor h = in_layer("stem", [&] {
    Tensor t = grouped_conv2d(x, stem);
    if (cfg.use_batch_norm) t = batch_norm(t, stem_bn, training);
    return relu(t);
  });
  h = in_layer("attn_front", [&] { return dual_attention_block(h, attn_front.channel, attn_front.spatial); });
  for (size_t s = 0; s < stages.size(); ++s) {
    for (size_t j = 0; j < stages[s].size(); ++j) {
      std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(j);
      try {
        h = block_forward(h, stages[s][j], cfg.use_batch_norm, training);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " in layer '" + name + "'");
      }
    }
  }
  h = in_layer("head", [&] {
    Tensor t = cfg.use_batch_norm ? batch_norm(h, head_bn, training) : h;
    return relu(t);
  });
  h = in_layer("attn_back", [&] { return dual_attention_block(h, attn_back.channel, attn_back.spatial); });
  h = in_layer("mlp", [&] {
    Tensor t = reshape(global_avg_pool(h), {h.shape()[0], h.shape()[1]});
    for (size_t i = 0; i + 1 < mlp.size(); ++i) t = relu(linear(t, mlp[i]));
    return linear(t, mlp.back());
  });
  return h;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto conv = [&](const std::string& name, const Conv2dParams& c) {
    out.emplace_back(name + ".weight", c.weight);
    if (c.bias.defined()) out.emplace_back(name + ".bias", c.bias);
  };
  auto bn = [&](const std::string& name, const BatchNormState& st) {
    if (!cfg.use_batch_norm) return;
    out.emplace_back(name + ".gamma", st.gamma);
    out.emplace_back(name + ".beta", st.beta);
  };
  auto attn = [&](const std::string& name, const DualAttention& a) {
    out.emplace_back(name + ".channel.w1", a.channel.w1);
    out.emplace_back(name + ".channel.w2", a.channel.w2);
    conv(name + ".spatial.conv_avg", a.spatial.conv_avg);
    conv(name + ".spatial.conv_max", a.spatial.conv_max);
  };

  conv("stem.conv", stem);
  bn("stem.bn", stem_bn);
  attn("attn_front", attn_front);
  for (size_t s = 0; s < stages.size(); ++s) {
    for (size_t j = 0; j < stages[s].size(); ++j) {
      const std::string base = "stage" + std::to_string(s) + ".block" + std::to_string(j);
      const ResidualBlock& b = stages[s][j];
      bn(base + ".bn1", b.bn1);
      conv(base + ".reduce", b.reduce);
      bn(base + ".bn2", b.bn2);
      conv(base + ".grouped", b.grouped);
      bn(base + ".bn3", b.bn3);
      conv(base + ".expand", b.expand);
      if (b.downsample) conv(base + ".shortcut", b.shortcut);
    }
  }
  bn("head.bn", head_bn);
  attn("attn_back", attn_back);
  for (size_t i = 0; i < mlp.size(); ++i) {
    out.emplace_back("mlp." + std::to_string(i) + ".weight", mlp[i].weight);
    out.emplace_back("mlp." + std::to_string(i) + ".bias", mlp[i].bias);
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> Model::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  if (!cfg.use_batch_norm) return out;
  auto bn = [&](const std::string& name, BatchNormState& st) {
    out.emplace_back(name + ".running_mean", &st.running_mean);
    out.emplace_back(name + ".running_var", &st.running_var);
  };
  bn("stem.bn", stem_bn);
  for (size_t s = 0; s < stages.size(); ++s)
    for (size_t j = 0; j < stages[s].size(); ++j) {
      const std::string base = "stage" + std::to_string(s) + ".block" + std::to_string(j);
      bn(base + ".bn1", stages[s][j].bn1);
      bn(base + ".bn2", stages[s][j].bn2);
      bn(base + ".bn3", stages[s][j].bn3);
    }
  bn("head.bn", head_bn);
  return out;
}

void Model::clear_grads() {
  for (auto& [name, p] : named_parameters()) p.clear_grad();
}

Model build_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const bool conv_bias = !cfg.use_batch_norm;

  m.stem = make_conv(cfg.input_channels, cfg.stem_channels, 7, 2, 3, 1, conv_bias);
  m.stem_bn = BatchNormState::make(cfg.stem_channels);
  m.attn_front = make_attention(cfg.stem_channels, cfg.reduction_r, cfg.spatial_kernel);

  int64_t in = cfg.stem_channels;
  for (size_t s = 0; s < 4; ++s) {
    std::vector<ResidualBlock> stage;
    const int64_t width = cfg.stage_width(s);
    const int64_t out = cfg.stage_out(s);
    stage.push_back(make_block(in, width, out, cfg.cardinality, /*downsample=*/true, conv_bias));
    for (int64_t j = 0; j < cfg.stage_identity_counts[s]; ++j) {
      stage.push_back(make_block(out, width, out, cfg.cardinality, /*downsample=*/false, conv_bias));
    }
    m.stages.push_back(std::move(stage));
    in = out;
  }
  m.head_bn = BatchNormState::make(in);
  m.attn_back = make_attention(in, cfg.reduction_r, cfg.spatial_kernel);

  int64_t prev = in;
  for (int64_t w : cfg.mlp_hidden) {
    m.mlp.push_back({Tensor::zeros({w, prev}, true), Tensor::zeros({w}, true)});
    prev = w;
  }
  m.mlp.push_back({Tensor::zeros({cfg.num_classes, prev}, true), Tensor::zeros({cfg.num_classes}, true)});

  // Fan-in-scaled uniform init in registry order; biases, betas zero; gammas one.
  std::mt19937_64 rng(seed);
  for (auto& [name, p] : m.named_parameters()) {
    auto& v = p.mutable_values();
    if (name.ends_with(".gamma")) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (name.ends_with(".bias") || name.ends_with(".beta")) {
      std::fill(v.begin(), v.end(), 0.0);
    } else {
      int64_t fan_in = 1;
      const auto& sh = p.shape();
      for (size_t d = 1; d < sh.size(); ++d) fan_in *= sh[d];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& x : v) x = dist(rng);
    }
  }
  return m;
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("loss: logits must be [B,K]");
  const int64_t B = logits.shape()[0], K = logits.shape()[1];
  if (static_cast<int64_t>(labels.size()) != B) {
    throw std::invalid_argument("loss: labels length must equal batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= K) throw std::invalid_argument("loss: label out of range");
  }
  const auto& lv = logits.values();
  std::vector<double> softmax(lv.size());
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    double mx = lv[static_cast<size_t>(b * K)];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, lv[static_cast<size_t>(b * K + k)]);
    double denom = 0.0;
    for (int64_t k = 0; k < K; ++k) denom += std::exp(lv[static_cast<size_t>(b * K + k)] - mx);
    for (int64_t k = 0; k < K; ++k)
      softmax[static_cast<size_t>(b * K + k)] = std::exp(lv[static_cast<size_t>(b * K + k)] - mx) / denom;
    total += std::log(denom) - (lv[static_cast<size_t>(b * K + labels[static_cast<size_t>(b)])] - mx);
  }
  auto l_impl = logits.impl();
  auto backward = [B, K, labels, softmax = std::move(softmax), l_impl](
                      const std::vector<double>& g, GradMap& flow) {
    auto& gl = flow_at(flow, l_impl.get());
    const double scale = g[0] / static_cast<double>(B);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t k = 0; k < K; ++k) {
        const size_t idx = static_cast<size_t>(b * K + k);
        gl[idx] += scale * (softmax[idx] - (labels[static_cast<size_t>(b)] == k ? 1.0 : 0.0));
      }
  };
  return Tensor::from_op("cross_entropy", {1}, {total / static_cast<double>(B)},
                         {logits}, std::move(backward));
}

std::vector<double> positive_probabilities(const Tensor& logits) {
  if (logits.rank() != 2 || logits.shape()[1] != 2) {
    throw std::invalid_argument("positive_probabilities: logits must be [B,2]");
  }
  const int64_t B = logits.shape()[0];
  std::vector<double> out(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    const double l0 = logits.value_at(b * 2), l1 = logits.value_at(b * 2 + 1);
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    out[static_cast<size_t>(b)] = e1 / (e0 + e1);
  }
  return out;
}

int64_t count_parameters(const Model& m) {
  int64_t total = 0;
  for (const auto& [name, p] : m.named_parameters()) total += p.numel();
  return total;
}

std::vector<std::pair<std::string, int64_t>> parameter_table(const Model& m) {
  std::vector<std::pair<std::string, int64_t>> rows;
  for (const auto& [name, p] : m.named_parameters()) rows.emplace_back(name, p.numel());
  return rows;
}

}  // namespace discnet

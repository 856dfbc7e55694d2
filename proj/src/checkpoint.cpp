#include "discnet/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace discnet {

namespace {

using njson = nlohmann::ordered_json;

njson config_to_json(const ModelConfig& c) {
  njson j;
  j["input_channels"] = c.input_channels;
  j["input_h"] = c.input_h;
  j["input_w"] = c.input_w;
  j["stem_channels"] = c.stem_channels;
  j["stage_identity_counts"] = c.stage_identity_counts;
  j["stage_width_multipliers"] = c.stage_width_multipliers;
  j["cardinality"] = c.cardinality;
  j["reduction_r"] = c.reduction_r;
  j["spatial_kernel"] = c.spatial_kernel;
  j["use_batch_norm"] = c.use_batch_norm;
  j["num_classes"] = c.num_classes;
  j["mlp_hidden"] = c.mlp_hidden;
  return j;
}

ModelConfig config_from_json(const njson& j) {
  ModelConfig c;
  c.input_channels = j.at("input_channels").get<int64_t>();
  c.input_h = j.at("input_h").get<int64_t>();
  c.input_w = j.at("input_w").get<int64_t>();
  c.stem_channels = j.at("stem_channels").get<int64_t>();
  c.stage_identity_counts = j.at("stage_identity_counts").get<std::vector<int64_t>>();
  c.stage_width_multipliers = j.at("stage_width_multipliers").get<std::vector<int64_t>>();
  c.cardinality = j.at("cardinality").get<int64_t>();
  c.reduction_r = j.at("reduction_r").get<int64_t>();
  c.spatial_kernel = j.at("spatial_kernel").get<int64_t>();
  c.use_batch_norm = j.at("use_batch_norm").get<bool>();
  c.num_classes = j.at("num_classes").get<int64_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::vector<int64_t>>();
  return c;
}

void write_block(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, AdamW& opt,
                     int64_t epoch, const std::string& rng_state) {
  njson header;
  header["magic"] = "discnet-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = config_to_json(model.cfg);
  header["epoch"] = epoch;
  header["rng_state"] = rng_state;

  njson opt_j;
  opt_j["lr"] = opt.config().lr;
  opt_j["beta1"] = opt.config().beta1;
  opt_j["beta2"] = opt.config().beta2;
  opt_j["eps"] = opt.config().eps;
  opt_j["weight_decay"] = opt.config().weight_decay;
  opt_j["literal_bias_correction"] = opt.config().literal_bias_correction;
  opt_j["step"] = opt.step_count();
  header["optimizer"] = std::move(opt_j);

  auto params = model.named_parameters();
  auto buffers = model.named_buffers();

  int64_t offset = 0;
  njson plist = njson::array();
  for (const auto& [name, p] : params) {
    njson e;
    e["name"] = name;
    e["shape"] = p.shape();
    e["offset"] = offset;
    e["count"] = p.numel();
    plist.push_back(std::move(e));
    // parameter values, then its m and v moment blocks
    offset += 3 * p.numel();
  }
  header["parameters"] = std::move(plist);

  njson blist = njson::array();
  for (const auto& [name, buf] : buffers) {
    njson e;
    e["name"] = name;
    e["offset"] = offset;
    e["count"] = static_cast<int64_t>(buf->size());
    blist.push_back(std::move(e));
    offset += static_cast<int64_t>(buf->size());
  }
  header["buffers"] = std::move(blist);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  f << header.dump() << "\n";
  for (size_t i = 0; i < params.size(); ++i) {
    write_block(f, params[i].second.values());
    write_block(f, opt.first_moments()[i]);
    write_block(f, opt.second_moments()[i]);
  }
  for (const auto& [name, buf] : buffers) write_block(f, *buf);
}

Checkpoint load_checkpoint(const std::string& path, Model& model_out,
                           std::unique_ptr<AdamW>& opt_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::string header_line;
  std::getline(f, header_line);
  njson header;
  try {
    header = njson::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint '" + path + "' header does not parse: " + e.what());
  }
  if (header.value("magic", "") != "discnet-checkpoint") {
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  }
  if (header.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint '" + path + "' has unsupported format version " +
                             std::to_string(header.at("version").get<int>()));
  }

  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.epoch = header.at("epoch").get<int64_t>();
  ck.rng_state = header.at("rng_state").get<std::string>();
  const auto& oj = header.at("optimizer");
  ck.opt_config.lr = oj.at("lr").get<double>();
  ck.opt_config.beta1 = oj.at("beta1").get<double>();
  ck.opt_config.beta2 = oj.at("beta2").get<double>();
  ck.opt_config.eps = oj.at("eps").get<double>();
  ck.opt_config.weight_decay = oj.at("weight_decay").get<double>();
  ck.opt_config.literal_bias_correction = oj.at("literal_bias_correction").get<bool>();
  ck.opt_step = oj.at("step").get<int64_t>();

  model_out = build_model(ck.config, /*seed=*/0);
  auto params = model_out.named_parameters();
  const auto& plist = header.at("parameters");
  if (plist.size() != params.size()) {
    throw std::runtime_error("checkpoint parameter set does not match the model");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (plist[i].at("name").get<std::string>() != params[i].first) {
      throw std::runtime_error("checkpoint parameter name mismatch at '" + params[i].first + "'");
    }
  }

  opt_out = std::make_unique<AdamW>(params, ck.opt_config);
  opt_out->set_step_count(ck.opt_step);

  auto read_block = [&](std::vector<double>& v) {
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (static_cast<size_t>(f.gcount()) != v.size() * sizeof(double)) {
      throw std::runtime_error("checkpoint '" + path + "' is truncated");
    }
  };
  for (size_t i = 0; i < params.size(); ++i) {
    read_block(params[i].second.mutable_values());
    read_block(opt_out->first_moments()[i]);
    read_block(opt_out->second_moments()[i]);
  }
  auto buffers = model_out.named_buffers();
  const auto& blist = header.at("buffers");
  if (blist.size() != buffers.size()) {
    throw std::runtime_error("checkpoint buffer set does not match the model");
  }
  for (size_t i = 0; i < buffers.size(); ++i) {
    if (blist[i].at("name").get<std::string>() != buffers[i].first) {
      throw std::runtime_error("checkpoint buffer name mismatch at '" + buffers[i].first + "'");
    }
    read_block(*buffers[i].second);
  }
  return ck;
}

}  // namespace discnet

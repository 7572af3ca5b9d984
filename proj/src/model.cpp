#include "realgait/model.hpp"

#include <json.hpp>

namespace realgait {

using nlohmann::json;

std::string to_string(PpmVariant v) {
  return v == PpmVariant::ppm ? "ppm" : "ppm_v";
}

PpmVariant ppm_variant_from_string(const std::string& s) {
  if (s == "ppm") return PpmVariant::ppm;
  if (s == "ppm_v") return PpmVariant::ppm_v;
  throw std::invalid_argument("unknown ppm variant: " + s);
}

void ModelConfig::validate() const {
  if (input_size != 256 && input_size != 64)
    throw std::invalid_argument("model.input_size must be 256 or 64");
  if (block23_stride != 1 && block23_stride != 2)
    throw std::invalid_argument("model.block23_stride must be 1 or 2");
  if (input_size == 64 && (use_alignment || block23_stride != 1))
    throw std::invalid_argument(
        "64-pixel input requires use_alignment=false and block23_stride=1");
  if (ppm_scales_u < 1 || ppm_scales_v < 1)
    throw std::invalid_argument("ppm scales must be >= 1");
  if (patch_dim < 1) throw std::invalid_argument("model.patch_dim must be >= 1");
  if (channel_scale <= 0.0)
    throw std::invalid_argument("model.channel_scale must be > 0");
  // Verifies the pyramid divides the feature map.
  ppm_partition(feature_size(), feature_size(), ppm_scales_u, ppm_scales_v,
                ppm_variant);
}

int ModelConfig::scaled(int channels) const {
  const int c = static_cast<int>(channels * channel_scale + 0.5);
  return c < 1 ? 1 : c;
}

int ModelConfig::feature_size() const {
  int s = nn::conv_out_size(input_size, 7, 2, 3);  // stem
  s = nn::conv_out_size(s, 3, 2, 1);               // max pool
  s = nn::conv_out_size(s, 3, block23_stride, 1);  // group 2 first block
  s = nn::conv_out_size(s, 3, block23_stride, 1);  // group 3 first block
  return s;
}

std::string ModelConfig::to_json() const {
  json j;
  j["input_size"] = input_size;
  j["use_alignment"] = use_alignment;
  j["block23_stride"] = block23_stride;
  j["ppm_scales_u"] = ppm_scales_u;
  j["ppm_scales_v"] = ppm_scales_v;
  j["patch_dim"] = patch_dim;
  j["ppm_variant"] = realgait::to_string(ppm_variant);
  j["channel_scale"] = channel_scale;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig cfg;
  cfg.input_size = j.at("input_size").get<int>();
  cfg.use_alignment = j.at("use_alignment").get<bool>();
  cfg.block23_stride = j.at("block23_stride").get<int>();
  cfg.ppm_scales_u = j.at("ppm_scales_u").get<int>();
  cfg.ppm_scales_v = j.at("ppm_scales_v").get<int>();
  cfg.patch_dim = j.at("patch_dim").get<int>();
  cfg.ppm_variant = ppm_variant_from_string(j.at("ppm_variant").get<std::string>());
  cfg.channel_scale = j.at("channel_scale").get<double>();
  cfg.validate();
  return cfg;
}

int ppm_patch_count(int scales_u, int scales_v) {
  return ((1 << scales_u) - 1) * ((1 << scales_v) - 1);
}

std::vector<PpmOption> ppm_partition(int h, int w, int scales_u, int scales_v,
                                     PpmVariant variant) {
  std::vector<PpmOption> options;
  for (int u = 1; u <= scales_u; ++u) {
    for (int v = 1; v <= scales_v; ++v) {
      PpmOption option;
      option.u = u;
      option.v = v;
      const int want = (1 << (u - 1)) * (1 << (v - 1));
      if (want > h * w)
        throw std::invalid_argument("ppm_partition: option (" +
                                    std::to_string(u) + ", " +
                                    std::to_string(v) + ") asks for " +
                                    std::to_string(want) + " patches on a " +
                                    std::to_string(h) + "x" + std::to_string(w) +
                                    " map");
      int rows, cols;
      if (variant == PpmVariant::ppm_v) {
        rows = 1 << (u - 1);
        cols = 1 << (v - 1);
      } else if (want <= h) {
        rows = want;
        cols = 1;
      } else {
        rows = h;
        cols = want / h;
        if (rows * cols != want)
          throw std::invalid_argument(
              "ppm_partition: patch count not divisible by map height");
      }
      if (h % rows != 0 || w % cols != 0)
        throw std::invalid_argument("ppm_partition: " + std::to_string(rows) +
                                    "x" + std::to_string(cols) +
                                    " grid does not divide a " +
                                    std::to_string(h) + "x" + std::to_string(w) +
                                    " map");
      const int ph = h / rows, pw = w / cols;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          option.patches.push_back(
              {r * ph, (r + 1) * ph, c * pw, (c + 1) * pw});
      options.push_back(std::move(option));
    }
  }
  return options;
}

}  // namespace realgait

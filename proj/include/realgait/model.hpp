#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "realgait/nn/layers.hpp"
#include "realgait/nn/tensor.hpp"

namespace realgait {

enum class PpmVariant { ppm, ppm_v };

std::string to_string(PpmVariant v);
PpmVariant ppm_variant_from_string(const std::string& s);

struct ModelConfig {
  int input_size = 256;       // 256, or 64 with alignment off and stride-1 blocks
  bool use_alignment = true;  // localization network + affine warp
  int block23_stride = 2;     // stride of residual groups 2 and 3 (1 or 2)
  int ppm_scales_u = 4;
  int ppm_scales_v = 4;
  int patch_dim = 256;        // d: output width of each per-patch map
  PpmVariant ppm_variant = PpmVariant::ppm;
  double channel_scale = 1.0;  // shrinks every channel width, for small runs

  void validate() const;
  int scaled(int channels) const;
  int feature_channels() const { return scaled(256); }
  // Spatial edge of the backbone output feature map.
  int feature_size() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Patch layout of one pyramid option. Rectangles are half-open in both axes
// and tile the feature map exactly.
struct PatchRect {
  int y0, y1, x0, x1;
};

struct PpmOption {
  int u = 1, v = 1;
  std::vector<PatchRect> patches;
};

// Pyramid partitions for scales u in [1, U], v in [1, V]. Each option asks
// for W = 2^(u-1) * 2^(v-1) patches. The default rule splits into W
// horizontal strips while W <= h, otherwise h strips of height one, each cut
// into W/h vertical pieces; the ppm_v rule always uses the regular
// 2^(u-1) x 2^(v-1) grid.
std::vector<PpmOption> ppm_partition(int h, int w, int scales_u, int scales_v,
                                     PpmVariant variant);

int ppm_patch_count(int scales_u, int scales_v);

namespace nn {

// Standard two-convolution residual block with identity shortcut, or a 1x1
// projection when the stride or channel count changes.
template <typename T>
class BasicBlock {
 public:
  BasicBlock(int in_c, int out_c, int stride)
      : conv1_(in_c, out_c, 3, stride, 1, false),
        bn1_(out_c),
        conv2_(out_c, out_c, 3, 1, 1, false),
        bn2_(out_c) {
    if (stride != 1 || in_c != out_c) {
      proj_conv_ = std::make_unique<Conv2d<T>>(in_c, out_c, 1, stride, 0, false);
      proj_bn_ = std::make_unique<BatchNorm2d<T>>(out_c);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
    out = bn2_.forward(conv2_.forward(out, train), train);
    Tensor<T> shortcut =
        proj_conv_ ? proj_bn_->forward(proj_conv_->forward(x, train), train) : x;
    if (!out.same_shape(shortcut))
      throw std::logic_error("BasicBlock: branch shape mismatch");
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += shortcut[i];
    return relu2_.forward(out, train);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g = relu2_.backward(grad_out);
    Tensor<T> g_main = conv1_.backward(bn1_.backward(
        relu1_.backward(conv2_.backward(bn2_.backward(g)))));
    Tensor<T> g_short =
        proj_conv_ ? proj_conv_->backward(proj_bn_->backward(g)) : g;
    for (std::size_t i = 0; i < g_main.numel(); ++i) g_main[i] += g_short[i];
    return g_main;
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    conv1_.collect_params(out, prefix + ".conv1");
    bn1_.collect_params(out, prefix + ".bn1");
    conv2_.collect_params(out, prefix + ".conv2");
    bn2_.collect_params(out, prefix + ".bn2");
    if (proj_conv_) {
      proj_conv_->collect_params(out, prefix + ".proj");
      proj_bn_->collect_params(out, prefix + ".proj_bn");
    }
  }

  void collect_buffers(std::vector<BufferRef<T>>& out, const std::string& prefix) {
    bn1_.collect_buffers(out, prefix + ".bn1");
    bn2_.collect_buffers(out, prefix + ".bn2");
    if (proj_bn_) proj_bn_->collect_buffers(out, prefix + ".proj_bn");
  }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  ReLU<T> relu1_, relu2_;
  std::unique_ptr<Conv2d<T>> proj_conv_;
  std::unique_ptr<BatchNorm2d<T>> proj_bn_;
};

// Frame-level feature extractor: 7x7/2 stem, 3x3/2 max pool, then three
// pairs of basic residual blocks (64, 128, 256 channels before scaling).
// Groups 2 and 3 use block23_stride.
template <typename T>
class Backbone {
 public:
  explicit Backbone(const ModelConfig& cfg)
      : stem_(1, cfg.scaled(64), 7, 2, 3, false),
        stem_bn_(cfg.scaled(64)),
        pool_(3, 2, 1) {
    const int c1 = cfg.scaled(64), c2 = cfg.scaled(128), c3 = cfg.scaled(256);
    const int s = cfg.block23_stride;
    blocks_.emplace_back(c1, c1, 1);
    blocks_.emplace_back(c1, c1, 1);
    blocks_.emplace_back(c1, c2, s);
    blocks_.emplace_back(c2, c2, 1);
    blocks_.emplace_back(c2, c3, s);
    blocks_.emplace_back(c3, c3, 1);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> out = pool_.forward(
        stem_relu_.forward(stem_bn_.forward(stem_.forward(x, train), train), train),
        train);
    for (auto& block : blocks_) out = block.forward(out, train);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g = grad_out;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
      g = it->backward(g);
    return stem_.backward(stem_bn_.backward(stem_relu_.backward(pool_.backward(g))));
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    stem_.collect_params(out, prefix + ".stem");
    stem_bn_.collect_params(out, prefix + ".stem_bn");
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect_params(out, prefix + ".block" + std::to_string(i + 1));
  }

  void collect_buffers(std::vector<BufferRef<T>>& out, const std::string& prefix) {
    stem_bn_.collect_buffers(out, prefix + ".stem_bn");
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect_buffers(out, prefix + ".block" + std::to_string(i + 1));
  }

 private:
  Conv2d<T> stem_;
  BatchNorm2d<T> stem_bn_;
  ReLU<T> stem_relu_;
  MaxPool2d<T> pool_;
  std::vector<BasicBlock<T>> blocks_;
};

// Regresses one 2x3 affine per frame: two 7x7/2 convolutions with 2x2 max
// pools between, then four fully connected layers down to 6 values. The
// final layer starts as the identity transform (zero weights, identity
// bias), so alignment is a no-op until trained.
template <typename T>
class LocalizationNet {
 public:
  explicit LocalizationNet(int input_size)
      : input_size_(input_size),
        conv1_(1, 16, 7, 2, 1, true, InitKind::xavier),
        pool1_(2, 2),
        conv2_(16, 32, 7, 2, 1, true, InitKind::xavier),
        pool2_(2, 2),
        fc1_(flatten_size(input_size), 512),
        fc2_(512, 128),
        fc3_(128, 32),
        fc4_(32, 6) {
    fc4_.set_weight_init(InitKind::zero);
    fc4_.set_bias_init(InitKind::identity_affine_bias);
  }

  static int flatten_size(int input_size) {
    int s = conv_out_size(input_size, 7, 2, 1);  // conv1
    s = conv_out_size(s, 2, 2, 0);               // pool1
    s = conv_out_size(s, 7, 2, 1);               // conv2
    s = conv_out_size(s, 2, 2, 0);               // pool2
    return s * s * 32;
  }

  // frames [N, 1, S, S] -> theta [N, 2, 3]
  Tensor<T> forward(const Tensor<T>& frames, bool train) {
    if (frames.dim(2) != input_size_ || frames.dim(3) != input_size_)
      throw std::invalid_argument("LocalizationNet: bad input size");
    const int n = frames.dim(0);
    Tensor<T> t = relu1_.forward(conv1_.forward(frames, train), train);
    t = pool1_.forward(t, train);
    t = relu2_.forward(conv2_.forward(t, train), train);
    t = pool2_.forward(t, train);
    conv_out_shape_ = t.shape();
    t.reshape({n, static_cast<int>(t.numel()) / n});
    t = relu3_.forward(fc1_.forward(t, train), train);
    t = relu4_.forward(fc2_.forward(t, train), train);
    t = relu5_.forward(fc3_.forward(t, train), train);
    t = fc4_.forward(t, train);
    t.reshape({n, 2, 3});
    return t;
  }

  Tensor<T> backward(const Tensor<T>& grad_theta) {
    Tensor<T> g = grad_theta;
    g.reshape({g.dim(0), 6});
    g = fc4_.backward(g);
    g = fc3_.backward(relu5_.backward(g));
    g = fc2_.backward(relu4_.backward(g));
    g = fc1_.backward(relu3_.backward(g));
    g.reshape(conv_out_shape_);
    g = pool2_.backward(g);
    g = conv2_.backward(relu2_.backward(g));
    g = pool1_.backward(g);
    return conv1_.backward(relu1_.backward(g));
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    conv1_.collect_params(out, prefix + ".conv1");
    conv2_.collect_params(out, prefix + ".conv2");
    fc1_.collect_params(out, prefix + ".fc1");
    fc2_.collect_params(out, prefix + ".fc2");
    fc3_.collect_params(out, prefix + ".fc3");
    fc4_.collect_params(out, prefix + ".fc4");
  }

 private:
  int input_size_;
  Conv2d<T> conv1_;
  MaxPool2d<T> pool1_;
  Conv2d<T> conv2_;
  MaxPool2d<T> pool2_;
  Linear<T> fc1_, fc2_, fc3_, fc4_;
  ReLU<T> relu1_, relu2_, relu3_, relu4_, relu5_;
  std::vector<int> conv_out_shape_;
};

// Patch Pyramid Mapping: every patch of every division option is pooled to a
// c-vector (global average + global max, summed) and sent through its own
// c -> d linear map. Output is [P, B, d] in option-then-patch order.
template <typename T>
class PatchPyramid {
 public:
  PatchPyramid(int h, int w, int c, int d, int scales_u, int scales_v,
               PpmVariant variant)
      : h_(h), w_(w), c_(c), d_(d) {
    for (const auto& option : ppm_partition(h, w, scales_u, scales_v, variant))
      for (const auto& rect : option.patches) rects_.push_back(rect);
    for (std::size_t p = 0; p < rects_.size(); ++p)
      linears_.emplace_back(c, d, false);
  }

  int patch_count() const { return static_cast<int>(rects_.size()); }

  // maps [B, c, h, w] -> features [P, B, d]
  Tensor<T> forward(const Tensor<T>& maps, bool train) {
    if (maps.dim(1) != c_ || maps.dim(2) != h_ || maps.dim(3) != w_)
      throw std::invalid_argument("PatchPyramid: bad map shape " +
                                  maps.shape_str());
    const int b = maps.dim(0);
    const int p_count = patch_count();
    Tensor<T> features({p_count, b, d_});
    argmax_.assign(static_cast<std::size_t>(p_count) * b * c_, 0);
    maps_shape_ = maps.shape();

    for (int p = 0; p < p_count; ++p) {
      const PatchRect r = rects_[static_cast<std::size_t>(p)];
      const T inv_area = T(1) / static_cast<T>((r.y1 - r.y0) * (r.x1 - r.x0));
      Tensor<T> pooled({b, c_});
      for (int i = 0; i < b; ++i) {
        for (int ch = 0; ch < c_; ++ch) {
          const T* plane =
              maps.data() + (static_cast<std::size_t>(i) * c_ + ch) * h_ * w_;
          T sum = T(0);
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
              const T v = plane[static_cast<std::size_t>(y) * w_ + x];
              sum += v;
              if (v > best) {
                best = v;
                best_idx = static_cast<std::size_t>(y) * w_ + x;
              }
            }
          }
          pooled.at(i, ch) = sum * inv_area + best;
          argmax_[(static_cast<std::size_t>(p) * b + i) * c_ + ch] = best_idx;
        }
      }
      Tensor<T> mapped =
          linears_[static_cast<std::size_t>(p)].forward(pooled, train);
      for (int i = 0; i < b; ++i)
        for (int k = 0; k < d_; ++k)
          features[(static_cast<std::size_t>(p) * b + i) * d_ + k] =
              mapped.at(i, k);
    }
    return features;
  }

  Tensor<T> backward(const Tensor<T>& grad_features) {
    const int b = maps_shape_[0];
    Tensor<T> grad_maps(maps_shape_);
    for (int p = 0; p < patch_count(); ++p) {
      const PatchRect r = rects_[static_cast<std::size_t>(p)];
      const T inv_area = T(1) / static_cast<T>((r.y1 - r.y0) * (r.x1 - r.x0));
      Tensor<T> grad_mapped({b, d_});
      for (int i = 0; i < b; ++i)
        for (int k = 0; k < d_; ++k)
          grad_mapped.at(i, k) =
              grad_features[(static_cast<std::size_t>(p) * b + i) * d_ + k];
      Tensor<T> grad_pooled =
          linears_[static_cast<std::size_t>(p)].backward(grad_mapped);
      for (int i = 0; i < b; ++i) {
        for (int ch = 0; ch < c_; ++ch) {
          const T g = grad_pooled.at(i, ch);
          if (g == T(0)) continue;
          T* plane = grad_maps.data() +
                     (static_cast<std::size_t>(i) * c_ + ch) * h_ * w_;
          const T g_avg = g * inv_area;
          for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x)
              plane[static_cast<std::size_t>(y) * w_ + x] += g_avg;
          plane[argmax_[(static_cast<std::size_t>(p) * b + i) * c_ + ch]] += g;
        }
      }
    }
    return grad_maps;
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    for (std::size_t p = 0; p < linears_.size(); ++p)
      linears_[p].collect_params(out,
                                 prefix + ".patch" + std::to_string(p));
  }

 private:
  int h_, w_, c_, d_;
  std::vector<PatchRect> rects_;
  std::vector<Linear<T>> linears_;
  std::vector<std::size_t> argmax_;
  std::vector<int> maps_shape_;
};

// The full network: optional per-frame alignment, the residual backbone,
// temporal max pooling over each clip, and the patch pyramid.
template <typename T>
class RealGaitNet {
 public:
  explicit RealGaitNet(const ModelConfig& cfg)
      : cfg_(cfg),
        backbone_(cfg),
        ppm_(cfg.feature_size(), cfg.feature_size(), cfg.feature_channels(),
             cfg.patch_dim, cfg.ppm_scales_u, cfg.ppm_scales_v,
             cfg.ppm_variant) {
    cfg.validate();
    if (cfg.use_alignment)
      loc_ = std::make_unique<LocalizationNet<T>>(cfg.input_size);
  }

  const ModelConfig& config() const { return cfg_; }
  int patch_count() const { return ppm_.patch_count(); }
  int embedding_length() const { return ppm_.patch_count() * cfg_.patch_dim; }

  // frames [N, 1, S, S] grouped into clips -> per-patch features [P, B, d].
  Tensor<T> forward(const Tensor<T>& frames, const std::vector<int>& clip_sizes,
                    bool train) {
    if (frames.dim(2) != cfg_.input_size || frames.dim(3) != cfg_.input_size)
      throw std::invalid_argument("RealGaitNet: frames must be " +
                                  std::to_string(cfg_.input_size) + "x" +
                                  std::to_string(cfg_.input_size));
    Tensor<T> x = frames;
    if (loc_) {
      Tensor<T> theta = loc_->forward(frames, train);
      x = sampler_.forward(frames, theta);
    }
    Tensor<T> maps = backbone_.forward(x, train);
    Tensor<T> pooled = temporal_.forward(maps, clip_sizes);
    return ppm_.forward(pooled, train);
  }

  void backward(const Tensor<T>& grad_features) {
    Tensor<T> g = backbone_.backward(temporal_.backward(ppm_.backward(grad_features)));
    if (loc_) {
      sampler_.backward(g);  // input gradient ends at the data
      loc_->backward(sampler_.grad_theta());
    }
  }

  // Set-level embedding of one sequence (eval mode, running statistics).
  std::vector<float> embed(const Tensor<T>& frames) {
    Tensor<T> features =
        forward(frames, {frames.dim(0)}, /*train=*/false);
    std::vector<float> flat(features.numel());
    for (std::size_t i = 0; i < features.numel(); ++i)
      flat[i] = static_cast<float>(features[i]);
    return flat;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    if (loc_) loc_->collect_params(out, "loc");
    backbone_.collect_params(out, "backbone");
    ppm_.collect_params(out, "ppm");
    return out;
  }

  std::vector<BufferRef<T>> buffers() {
    std::vector<BufferRef<T>> out;
    backbone_.collect_buffers(out, "backbone");
    return out;
  }

  void zero_grad() {
    for (auto& p : params()) p.grad->zero();
  }

 private:
  ModelConfig cfg_;
  std::unique_ptr<LocalizationNet<T>> loc_;
  GridSampler<T> sampler_;
  Backbone<T> backbone_;
  TemporalMaxPool<T> temporal_;
  PatchPyramid<T> ppm_;
};

}  // namespace nn
}  // namespace realgait

#pragma once

// Dual-branch encoder/decoder segmentation network.
//
//   encoder    5 residual stages, each three atrous 3x3 convs (dilation 1, 2, 5) and a
//              stride-2 3x3 conv; channels 64-128-256-512-512, spatial /2 per stage
//   recon      bilinear resize + 1x1 conv, twice, then 1x1 conv to 3 channels, resize
//              to input size and sigmoid (f_D1 at /16, f_D2 at /8 feed the attention)
//   seg        resize latent to /16, attention with f_D1, 3x3 conv, resize to /8,
//              concat with encoder stage-3 output, 1x1 conv, attention with f_D2,
//              3x3 conv to 4 classes, resize to input size, softmax
//
// Channel widths are divided by NetworkConfig::width_divisor for reduced-size variants.

#include <array>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/nn/layers.hpp"
#include "ocfr/nn/ops.hpp"
#include "ocfr/rng.hpp"
#include "ocfr/tensor.hpp"
#include "ocfr/types.hpp"

namespace ocfr::nn {

struct NetworkConfig {
  int input_height = kNetHeight;
  int input_width = kNetWidth;
  int width_divisor = 1;

  std::array<int, 5> stage_channels() const {
    return {64 / width_divisor, 128 / width_divisor, 256 / width_divisor, 512 / width_divisor, 512 / width_divisor};
  }
  int latent_channels() const { return stage_channels()[4]; }
  int latent_height() const { return input_height / 32; }
  int latent_width() const { return input_width / 32; }

  bool is_full_size() const { return input_height == kNetHeight && input_width == kNetWidth && width_divisor == 1; }

  void validate() const {
    if (input_height <= 0 || input_width <= 0 || input_height % 32 || input_width % 32)
      throw InvalidArgument("network input must be a positive multiple of 32 in both dimensions, got " +
                            ocfr::detail::dims_str(input_height, input_width));
    if (width_divisor <= 0 || 64 % width_divisor)
      throw InvalidArgument("width_divisor must divide 64, got " + std::to_string(width_divisor));
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

template <typename T>
struct EncoderOutput {
  Tensor<T> latent;               ///< stage-5 output
  std::array<Tensor<T>, 5> skips; ///< every stage output (skips[4] is the latent)
};

template <typename T>
struct ReconstructionOutput {
  Tensor<T> f_d1;            ///< /16, latent channels
  Tensor<T> f_d2;            ///< /8, stage-3 channels
  Tensor<T> logits;          ///< pre-sigmoid, N x 3 x H x W
  Tensor<T> reconstruction;  ///< sigmoid(logits)
};

template <typename T>
struct SegmentationDecoderOutput {
  Tensor<T> f_s1;           ///< resized latent
  Tensor<T> attention1;     ///< first attention block output, /8
  Tensor<T> concat;         ///< after concat + channel fuse, /8
  Tensor<T> logits;         ///< N x 4 x H x W
  Tensor<T> probabilities;  ///< softmax(logits)
};

template <typename T>
struct ForwardOutput {
  EncoderOutput<T> encoder;
  ReconstructionOutput<T> recon;
  SegmentationDecoderOutput<T> seg;

  const Tensor<T>& segmentation() const { return seg.probabilities; }
  const Tensor<T>& reconstruction() const { return recon.reconstruction; }
  const Tensor<T>& latent() const { return encoder.latent; }
};

/// One residual encoder stage.
template <typename T>
struct ResStage {
  std::array<ConvUnit<T>, 3> atrous;
  bool has_proj = false;
  Conv2d<T> proj;
  ConvUnit<T> down;

  struct Cache {
    std::array<typename ConvUnit<T>::Cache, 3> atrous;
    Tensor<T> x;
    Tensor<T> merged;
    typename ConvUnit<T>::Cache down;
  };

  static ResStage create(ParamStore<T>& ps, const std::string& name, int in_c, int out_c, Rng& rng) {
    ResStage s;
    constexpr std::array<int, 3> rates{1, 2, 5};
    for (int i = 0; i < 3; ++i)
      s.atrous[i] = ConvUnit<T>::create(ps, name + ".atrous" + std::to_string(i + 1),
                                        {i == 0 ? in_c : out_c, out_c, 3, 1, rates[i]}, rng, true, i < 2);
    s.has_proj = in_c != out_c;
    if (s.has_proj) s.proj = Conv2d<T>::create(ps, name + ".proj", {in_c, out_c, 1, 1, 1}, rng, 1.0);
    s.down = ConvUnit<T>::create(ps, name + ".down", {out_c, out_c, 3, 2, 1}, rng, true, true);
    return s;
  }

  Tensor<T> forward(const ParamStore<T>& ps, const Tensor<T>& x, Cache* cache, std::vector<T>& scratch) const {
    Tensor<T> a = atrous[0].forward(ps, x, cache ? &cache->atrous[0] : nullptr, scratch);
    a = atrous[1].forward(ps, a, cache ? &cache->atrous[1] : nullptr, scratch);
    a = atrous[2].forward(ps, a, cache ? &cache->atrous[2] : nullptr, scratch);
    if (has_proj)
      add_inplace(a, proj.forward(ps, x, scratch));
    else
      add_inplace(a, x);
    relu_inplace(a);
    if (cache) {
      cache->x = x;
      cache->merged = a;
    }
    return down.forward(ps, a, cache ? &cache->down : nullptr, scratch);
  }

  void update_running(ParamStore<T>& ps, const Cache& cache) const {
    for (int i = 0; i < 3; ++i) atrous[i].update_running(ps, cache.atrous[i]);
    down.update_running(ps, cache.down);
  }

  Tensor<T> backward(ParamStore<T>& ps, Tensor<T> dy, const Cache& cache, bool need_dx, std::vector<T>& scratch) const {
    Tensor<T> d_merged = relu_backward(cache.merged, down.backward(ps, std::move(dy), cache.down, true, scratch));
    Tensor<T> d = atrous[2].backward(ps, d_merged, cache.atrous[2], true, scratch);
    d = atrous[1].backward(ps, std::move(d), cache.atrous[1], true, scratch);
    Tensor<T> dx = atrous[0].backward(ps, std::move(d), cache.atrous[0], need_dx, scratch);
    if (has_proj) {
      Tensor<T> dproj;
      proj.backward(ps, cache.x, d_merged, need_dx ? &dproj : nullptr, scratch);
      if (need_dx) add_inplace(dx, dproj);
    } else if (need_dx) {
      add_inplace(dx, d_merged);
    }
    return dx;
  }
};

template <typename T>
class SegmentationNet {
 public:
  /// Everything forward_train() keeps for backward().
  struct TrainCache {
    Shape4 input;
    std::array<typename ResStage<T>::Cache, 5> stages;
    Tensor<T> z;
    Tensor<T> r_d1, f_d1, r_d2, f_d2, recon_small, recon;
    Tensor<T> f_s1, att1_softmax, att1_fused;
    typename ConvUnit<T>::Cache att1_conv;
    Shape4 att1_conv_out;
    Tensor<T> concat;
    typename ConvUnit<T>::Cache fuse;
    Tensor<T> f_s2, att2_softmax, att2_fused;
    Shape4 head_out;
    Tensor<T> probabilities;
  };

  explicit SegmentationNet(NetworkConfig cfg = {}, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x5E6));
    const auto ch = cfg_.stage_channels();
    int in_c = 3;
    for (int s = 0; s < 5; ++s) {
      stages_[s] = ResStage<T>::create(ps_, "encoder.stage" + std::to_string(s + 1), in_c, ch[s], rng);
      in_c = ch[s];
    }
    d1_ = Conv2d<T>::create(ps_, "recon.d1", {ch[4], ch[4], 1, 1, 1}, rng, 1.0);
    d2_ = Conv2d<T>::create(ps_, "recon.d2", {ch[4], ch[2], 1, 1, 1}, rng, 1.0);
    d3_ = Conv2d<T>::create(ps_, "recon.d3", {ch[2], 3, 1, 1, 1}, rng, 1.0);
    att1_ = ConvUnit<T>::create(ps_, "seg.att1", {ch[4], ch[2], 3, 1, 1}, rng, true, true);
    fuse_ = ConvUnit<T>::create(ps_, "seg.fuse", {2 * ch[2], ch[2], 1, 1, 1}, rng, true, true);
    head_ = Conv2d<T>::create(ps_, "seg.att2.head", {ch[2], kNumClasses, 3, 1, 1}, rng, 1.0);
  }

  const NetworkConfig& config() const noexcept { return cfg_; }
  ParamStore<T>& params() noexcept { return ps_; }
  const ParamStore<T>& params() const noexcept { return ps_; }

  Shape4 expected_input(int n = 1) const { return {n, 3, cfg_.input_height, cfg_.input_width}; }
  Shape4 expected_latent(int n = 1) const { return {n, cfg_.latent_channels(), cfg_.latent_height(), cfg_.latent_width()}; }

  /// F_DS: latent code plus every stage output.
  EncoderOutput<T> encoder_forward(const Tensor<T>& x) const { return encode(x, nullptr); }

  /// F_D: reconstruction branch from the latent code.
  ReconstructionOutput<T> reconstruction_decoder_forward(const Tensor<T>& z) const { return decode_recon(z, nullptr); }

  /// F_S: segmentation branch; needs the latent, both F_D features and the stage-3 skip.
  SegmentationDecoderOutput<T> segmentation_decoder_forward(const Tensor<T>& z, const Tensor<T>& f_d1, const Tensor<T>& f_d2,
                                                            const Tensor<T>& skip3) const {
    return decode_seg(z, f_d1, f_d2, skip3, nullptr);
  }

  /// Inference pass (running batch-norm statistics, no state change).
  ForwardOutput<T> forward(const Tensor<T>& x) const { return run(x, nullptr); }

  /// Training pass (batch statistics); caches activations and updates running statistics.
  ForwardOutput<T> forward_train(const Tensor<T>& x) {
    cache_ = TrainCache{};
    auto out = run(x, &cache_);
    for (int s = 0; s < 5; ++s) stages_[s].update_running(ps_, cache_.stages[s]);
    att1_.update_running(ps_, cache_.att1_conv);
    fuse_.update_running(ps_, cache_.fuse);
    has_cache_ = true;
    return out;
  }

  /// Accumulates parameter gradients given dL/d(reconstruction) and dL/d(probabilities)
  /// for the last forward_train() batch.
  void backward(const Tensor<T>& d_recon, const Tensor<T>& d_prob) {
    if (!has_cache_) throw Error("backward() called without a preceding forward_train()");
    auto& c = cache_;
    std::vector<T> scratch;
    require_shape(d_recon.shape(), c.recon.shape(), "backward d_recon");
    require_shape(d_prob.shape(), c.probabilities.shape(), "backward d_prob");

    // segmentation branch
    Tensor<T> d = resize_backward(softmax_channels_backward(c.probabilities, d_prob), c.head_out);
    Tensor<T> d_fused2;
    head_.backward(ps_, c.att2_fused, d, &d_fused2, scratch);
    auto [d_fd2_att, d_fs2] = attention_fuse_backward(c.att2_softmax, c.f_s2, d_fused2);
    Tensor<T> d_concat = fuse_.backward(ps_, std::move(d_fs2), c.fuse, true, scratch);
    auto [d_att1, d_skip3] = split_channels(d_concat, cfg_.stage_channels()[2]);
    Tensor<T> d_fused1 = att1_.backward(ps_, resize_backward(d_att1, c.att1_conv_out), c.att1_conv, true, scratch);
    auto [d_fd1_att, d_fs1] = attention_fuse_backward(c.att1_softmax, c.f_s1, d_fused1);
    Tensor<T> d_z = resize_backward(d_fs1, c.z.shape());

    // reconstruction branch
    Tensor<T> d_small = resize_backward(sigmoid_backward(c.recon, d_recon), c.recon_small.shape());
    Tensor<T> d_fd2;
    d3_.backward(ps_, c.f_d2, d_small, &d_fd2, scratch);
    add_inplace(d_fd2, d_fd2_att);
    Tensor<T> d_rd2;
    d2_.backward(ps_, c.r_d2, d_fd2, &d_rd2, scratch);
    Tensor<T> d_fd1 = resize_backward(d_rd2, c.f_d1.shape());
    add_inplace(d_fd1, d_fd1_att);
    Tensor<T> d_rd1;
    d1_.backward(ps_, c.r_d1, d_fd1, &d_rd1, scratch);
    add_inplace(d_z, resize_backward(d_rd1, c.z.shape()));

    // encoder
    Tensor<T> g = std::move(d_z);
    for (int s = 4; s >= 0; --s) {
      g = stages_[s].backward(ps_, std::move(g), c.stages[s], s > 0, scratch);
      if (s == 3) add_inplace(g, d_skip3);
    }
  }

  /// Which ReLU units were active in the last forward_train() batch, in a fixed order.
  /// Two passes with equal patterns lie in the same piecewise-smooth region.
  std::vector<bool> relu_pattern() const {
    if (!has_cache_) throw Error("relu_pattern() called without a preceding forward_train()");
    std::vector<bool> out;
    auto add = [&](const Tensor<T>& y) {
      for (T v : y.values()) out.push_back(v > T{0});
    };
    for (const auto& s : cache_.stages) {
      add(s.atrous[0].y);
      add(s.atrous[1].y);
      add(s.merged);
      add(s.down.y);
    }
    add(cache_.att1_conv.y);
    add(cache_.fuse.y);
    return out;
  }

  /// Drops cached activations (they are large for full-size inputs).
  void release_cache() {
    cache_ = TrainCache{};
    has_cache_ = false;
  }

 private:
  EncoderOutput<T> encode(const Tensor<T>& x, TrainCache* c) const {
    require_shape(x.shape(), expected_input(x.n()), "encoder input");
    std::vector<T> scratch;
    EncoderOutput<T> out;
    const Tensor<T>* in = &x;
    for (int s = 0; s < 5; ++s) {
      out.skips[s] = stages_[s].forward(ps_, *in, c ? &c->stages[s] : nullptr, scratch);
      in = &out.skips[s];
    }
    out.latent = out.skips[4];
    require_shape(out.latent.shape(), expected_latent(x.n()), "latent");
    return out;
  }

  ReconstructionOutput<T> decode_recon(const Tensor<T>& z, TrainCache* c) const {
    require_shape(z.shape(), expected_latent(z.n()), "reconstruction decoder input");
    std::vector<T> scratch;
    const int h = cfg_.input_height, w = cfg_.input_width;
    ReconstructionOutput<T> out;
    Tensor<T> r_d1 = resize_forward(z, h / 16, w / 16);
    out.f_d1 = d1_.forward(ps_, r_d1, scratch);
    Tensor<T> r_d2 = resize_forward(out.f_d1, h / 8, w / 8);
    out.f_d2 = d2_.forward(ps_, r_d2, scratch);
    // Bilinear resize and a 1x1 conv commute (interpolation weights sum to one), so the
    // 3-channel projection runs at /8 before upsampling.
    Tensor<T> small = d3_.forward(ps_, out.f_d2, scratch);
    out.logits = resize_forward(small, h, w);
    out.reconstruction = sigmoid(out.logits);
    if (c) {
      c->r_d1 = std::move(r_d1);
      c->f_d1 = out.f_d1;
      c->r_d2 = std::move(r_d2);
      c->f_d2 = out.f_d2;
      c->recon_small = std::move(small);
      c->recon = out.reconstruction;
    }
    return out;
  }

  SegmentationDecoderOutput<T> decode_seg(const Tensor<T>& z, const Tensor<T>& f_d1, const Tensor<T>& f_d2,
                                          const Tensor<T>& skip3, TrainCache* c) const {
    const int n = z.n(), h = cfg_.input_height, w = cfg_.input_width;
    const auto ch = cfg_.stage_channels();
    require_shape(z.shape(), expected_latent(n), "segmentation decoder input");
    require_shape(f_d1.shape(), {n, ch[4], h / 16, w / 16}, "f_D1");
    require_shape(f_d2.shape(), {n, ch[2], h / 8, w / 8}, "f_D2");
    require_shape(skip3.shape(), {n, ch[2], h / 8, w / 8}, "encoder stage-3 skip");
    std::vector<T> scratch;
    SegmentationDecoderOutput<T> out;

    out.f_s1 = resize_forward(z, h / 16, w / 16);
    Tensor<T> sm1;
    Tensor<T> fused1 = attention_fuse(f_d1, out.f_s1, &sm1);
    Tensor<T> a1 = att1_.forward(ps_, fused1, c ? &c->att1_conv : nullptr, scratch);
    const Shape4 a1_shape = a1.shape();
    out.attention1 = resize_forward(a1, h / 8, w / 8);

    Tensor<T> cat = concat_channels(out.attention1, skip3);
    out.concat = fuse_.forward(ps_, cat, c ? &c->fuse : nullptr, scratch);

    Tensor<T> sm2;
    Tensor<T> fused2 = attention_fuse(f_d2, out.concat, &sm2);
    Tensor<T> head = head_.forward(ps_, fused2, scratch);
    const Shape4 head_shape = head.shape();
    out.logits = resize_forward(head, h, w);
    out.probabilities = softmax_channels(out.logits);

    if (c) {
      c->f_s1 = out.f_s1;
      c->att1_softmax = std::move(sm1);
      c->att1_fused = std::move(fused1);
      c->att1_conv_out = a1_shape;
      c->concat = std::move(cat);
      c->f_s2 = out.concat;
      c->att2_softmax = std::move(sm2);
      c->att2_fused = std::move(fused2);
      c->head_out = head_shape;
      c->probabilities = out.probabilities;
    }
    return out;
  }

  ForwardOutput<T> run(const Tensor<T>& x, TrainCache* c) const {
    ForwardOutput<T> out;
    out.encoder = encode(x, c);
    out.recon = decode_recon(out.encoder.latent, c);
    out.seg = decode_seg(out.encoder.latent, out.recon.f_d1, out.recon.f_d2, out.encoder.skips[2], c);
    if (c) {
      c->input = x.shape();
      c->z = out.encoder.latent;
    }
    return out;
  }

  NetworkConfig cfg_;
  ParamStore<T> ps_;
  std::array<ResStage<T>, 5> stages_;
  Conv2d<T> d1_, d2_, d3_;
  ConvUnit<T> att1_, fuse_;
  Conv2d<T> head_;
  TrainCache cache_;
  bool has_cache_ = false;
};

}  // namespace ocfr::nn

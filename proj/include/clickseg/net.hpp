#pragma once

// MicroSegNet: a toy-width two-stream interactive segmentation network.
//
//   image stream        RGB + 6 click channels -> 4 strided conv blocks
//                       (WS conv, GN, LeakyReLU), output stride 8; taps at
//                       stride 2 ("early") and stride 4 ("mid")
//   interaction stream  6 click channels + previous mask -> 6 convs with
//                       strides 1,2,1,2,2,1 and LeakyReLU
//   fusion              concat both stride-8 outputs -> pyramid pooling
//   decoder             conv1..conv4 (LeakyReLU then GN), 3 bilinear x2
//                       upsamplings with skips from both streams, then the
//                       image + clicks at full resolution, conv5, conv6 and a
//                       1x1 conv7 clipped to [0, 1]
//
// Widths are the reference widths divided by NetConfig::width_div.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "clickseg/clicks.hpp"
#include "clickseg/guided.hpp"
#include "clickseg/image.hpp"
#include "clickseg/ops.hpp"
#include "clickseg/rng.hpp"

namespace clickseg::nn {

struct NetConfig {
  int width_div = 4;
  std::vector<int> image_widths{64, 256, 512, 512};
  std::vector<int> interaction_widths{64, 128, 256, 256, 256, 256};
  std::vector<int> interaction_strides{1, 2, 1, 2, 2, 1};
  std::vector<int> decoder_widths{256, 256, 256, 64, 32, 16};
  int ppm_width = 256;
  std::vector<int> ppm_bins{1, 2, 4};
  double leaky_slope = 0.01;
  double norm_eps = 1e-5;
  int max_groups = 32;
  int crop_size = 96;
  std::array<double, 3> click_sigmas{2.0, 6.0, 18.0};
  bool interaction_stream = true;
  bool prev_mask_feedback = true;
  // Experimental: guided filter inside the differentiable graph.
  bool guided_head_in_graph = false;
  int guided_radius = 2;
  double guided_eps = 1e-4;
  // Starting value of the final 1x1 conv's bias. A zero start puts about
  // half the outputs below the clip, where they receive no gradient.
  double output_bias_init = 0.5;
  // Backward convention of the output clip (see ClipGrad). Training uses
  // the restoring form; gradient checks switch it off.
  bool restoring_clip = true;

  int scaled(int w) const { return std::max(1, w / width_div); }
  int groups_for(int channels) const;
  std::string to_json() const;
  static NetConfig from_json(const std::string& text);
};

enum class ParamKind { ConvWeight, Bias, NormParam };

template <typename T>
struct Param {
  std::string name;
  ParamKind kind;
  TensorPtr<T> tensor;
};

// Inputs to one forward pass, already in tensor layout.
template <typename T>
struct NetInputs {
  TensorPtr<T> image;      // [1, 3, H, W]
  TensorPtr<T> clicks;     // [1, 6, H, W]
  TensorPtr<T> prev_mask;  // [1, 1, H, W]
  std::vector<double> guide_luma;  // only needed when the guided head is in-graph
};

template <typename T>
class MicroSegNet {
 public:
  MicroSegNet(const NetConfig& config, std::uint64_t seed);

  const NetConfig& config() const noexcept { return config_; }
  std::vector<Param<T>>& params() noexcept { return params_; }
  const std::vector<Param<T>>& params() const noexcept { return params_; }
  std::size_t parameter_count() const;

  // H and W must be multiples of 8. Output [1, 1, H, W] in [0, 1].
  TensorPtr<T> forward(Tape<T>& tape, const NetInputs<T>& inputs) const;

  void zero_grad();

  template <typename U>
  void copy_parameters_from(const MicroSegNet<U>& other) {
    require(other.params().size() == params_.size(), ErrorCode::Shape, "parameter layout mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = other.params()[i].tensor->data();
      auto& dst = params_[i].tensor->data();
      require(src.size() == dst.size(), ErrorCode::Shape, "parameter size mismatch: " + params_[i].name);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(src[j]);
    }
  }

 private:
  struct Conv {
    TensorPtr<T> weight;
    TensorPtr<T> bias;  // null for standardized convs followed by GN
    ConvSpec spec;
    bool standardize = false;
  };
  struct Norm {
    TensorPtr<T> gamma;
    TensorPtr<T> beta;
    int groups = 1;
  };

  Conv add_conv(const std::string& name, int cin, int cout, int k, ConvSpec spec, bool standardize,
                Rng& rng, double gain);
  Norm add_norm(const std::string& name, int channels);
  TensorPtr<T> apply(Tape<T>& tape, const Conv& conv, const TensorPtr<T>& x) const;
  TensorPtr<T> apply(Tape<T>& tape, const Norm& norm, const TensorPtr<T>& x) const;

  NetConfig config_;
  std::vector<Param<T>> params_;

  std::vector<Conv> image_convs_;
  std::vector<Norm> image_norms_;
  std::vector<Conv> interaction_convs_;
  std::vector<Conv> ppm_convs_;
  std::vector<Conv> decoder_convs_;  // conv1..conv7
  std::vector<Norm> decoder_norms_;  // after conv1..conv4
};

extern template class MicroSegNet<float>;
extern template class MicroSegNet<double>;
extern template class MicroSegNet<long double>;

// Checkpoint container:
//   bytes 0..3   magic "CSEG"
//   u32 LE       format version (1)
//   u32 LE       length L of the JSON header
//   L bytes      JSON: {"config": {...}, "params": [{"name","shape"}...], ...}
//   then every parameter tensor as raw little-endian float32, in
//   declaration order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string extra_json = "{}";  // free-form training metadata
};

void save_checkpoint(const MicroSegNet<float>& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta = {});
std::vector<std::uint8_t> serialize_checkpoint(const MicroSegNet<float>& net,
                                               const CheckpointMeta& meta = {});
std::unique_ptr<MicroSegNet<float>> load_checkpoint(const std::filesystem::path& path,
                                                    CheckpointMeta* meta = nullptr);

// Model inputs from raster types. Sizes must already be multiples of 8.
template <typename T>
NetInputs<T> make_inputs(const NetConfig& config, const Image& image, const ClickEncoding& clicks,
                         const SoftMask& prev_mask);

// Inference helper: pads to a multiple of 8 (and at least 8x the largest
// pooling bin count) by edge replication, runs the
// network without recording, crops, and optionally applies the guided filter
// post hoc using the image luminance as guide.
struct PredictOptions {
  bool guided = false;
  GuidedFilterParams guided_params{};
};

SoftMask predict(const MicroSegNet<float>& net, const Image& image, const std::vector<Click>& clicks,
                 const SoftMask& prev_mask, const PredictOptions& options = {});

}  // namespace clickseg::nn

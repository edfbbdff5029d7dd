#include "clickseg/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace clickseg::nn {

using nlohmann::json;

int NetConfig::groups_for(int channels) const {
  for (int g = std::min(max_groups, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

std::string NetConfig::to_json() const {
  json j = {
      {"width_div", width_div},
      {"image_widths", image_widths},
      {"interaction_widths", interaction_widths},
      {"interaction_strides", interaction_strides},
      {"decoder_widths", decoder_widths},
      {"ppm_width", ppm_width},
      {"ppm_bins", ppm_bins},
      {"leaky_slope", leaky_slope},
      {"norm_eps", norm_eps},
      {"max_groups", max_groups},
      {"crop_size", crop_size},
      {"click_sigmas", click_sigmas},
      {"interaction_stream", interaction_stream},
      {"prev_mask_feedback", prev_mask_feedback},
      {"guided_head_in_graph", guided_head_in_graph},
      {"guided_radius", guided_radius},
      {"guided_eps", guided_eps},
      {"output_bias_init", output_bias_init},
      {"restoring_clip", restoring_clip},
  };
  return j.dump();
}

NetConfig NetConfig::from_json(const std::string& text) {
  NetConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("net config JSON: ") + e.what());
  }
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  try {
    read("width_div", c.width_div);
    read("image_widths", c.image_widths);
    read("interaction_widths", c.interaction_widths);
    read("interaction_strides", c.interaction_strides);
    read("decoder_widths", c.decoder_widths);
    read("ppm_width", c.ppm_width);
    read("ppm_bins", c.ppm_bins);
    read("leaky_slope", c.leaky_slope);
    read("norm_eps", c.norm_eps);
    read("max_groups", c.max_groups);
    read("crop_size", c.crop_size);
    read("click_sigmas", c.click_sigmas);
    read("interaction_stream", c.interaction_stream);
    read("prev_mask_feedback", c.prev_mask_feedback);
    read("guided_head_in_graph", c.guided_head_in_graph);
    read("guided_radius", c.guided_radius);
    read("guided_eps", c.guided_eps);
    read("output_bias_init", c.output_bias_init);
    read("restoring_clip", c.restoring_clip);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("net config field: ") + e.what());
  }
  require(c.width_div >= 1, ErrorCode::InvalidArgument, "width_div must be >= 1");
  require(c.image_widths.size() == 4, ErrorCode::InvalidArgument, "image stream needs 4 widths");
  require(c.interaction_widths.size() == 6 && c.interaction_strides.size() == 6,
          ErrorCode::InvalidArgument, "interaction stream needs 6 layers");
  require(c.decoder_widths.size() == 6, ErrorCode::InvalidArgument, "decoder needs 6 widths");
  require(!c.ppm_bins.empty(), ErrorCode::InvalidArgument, "pyramid pooling needs bins");
  return c;
}

template <typename T>
MicroSegNet<T>::MicroSegNet(const NetConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  const NetConfig& c = config_;
  const double slope = c.leaky_slope;
  const double relu_gain = std::sqrt(2.0 / (1.0 + slope * slope));

  // Image stream.
  const ConvSpec s2{2, 1, 1};
  const ConvSpec s1{1, 1, 1};
  int cin = 3 + kClickChannels;
  for (int i = 0; i < 4; ++i) {
    const int cout = c.scaled(c.image_widths[i]);
    const ConvSpec spec = i < 3 ? s2 : ConvSpec{1, 2, 2};
    image_convs_.push_back(add_conv("image.block" + std::to_string(i + 1), cin, cout, 3, spec, true, rng,
                                    relu_gain));
    image_norms_.push_back(add_norm("image.block" + std::to_string(i + 1) + ".gn", cout));
    cin = cout;
  }
  const int early = c.scaled(c.image_widths[0]);
  const int mid = c.scaled(c.image_widths[1]);
  const int deep = c.scaled(c.image_widths[3]);

  // Interaction stream.
  std::array<int, 6> inter{};
  if (c.interaction_stream) {
    cin = kClickChannels + 1;
    for (int i = 0; i < 6; ++i) {
      inter[i] = c.scaled(c.interaction_widths[i]);
      interaction_convs_.push_back(add_conv("interaction.conv" + std::to_string(i + 1), cin, inter[i], 3,
                                            {c.interaction_strides[i], 1, 1}, false, rng, relu_gain));
      cin = inter[i];
    }
  }

  // Pyramid pooling over the fused stride-8 features.
  const int fused = deep + inter[5];
  const int branch = c.scaled(c.ppm_width);
  for (std::size_t b = 0; b < c.ppm_bins.size(); ++b)
    ppm_convs_.push_back(add_conv("ppm.bin" + std::to_string(c.ppm_bins[b]), fused, branch, 1, {1, 1, 0},
                                  false, rng, relu_gain));
  const int ppm_out = fused + branch * static_cast<int>(c.ppm_bins.size());

  // Decoder.
  std::array<int, 6> dec{};
  for (int i = 0; i < 6; ++i) dec[i] = c.scaled(c.decoder_widths[i]);
  const int in1 = ppm_out;
  const int in3 = dec[1] + mid + inter[3];
  const int in4 = dec[2] + early + inter[1];
  const int in5 = dec[3] + 3 + kClickChannels;
  const std::array<int, 6> dec_in{in1, dec[0], in3, in4, in5, dec[4]};
  for (int i = 0; i < 6; ++i) {
    const bool normed = i < 4;
    decoder_convs_.push_back(add_conv("decoder.conv" + std::to_string(i + 1), dec_in[i], dec[i], 3, s1,
                                      normed, rng, relu_gain));
    if (normed) decoder_norms_.push_back(add_norm("decoder.conv" + std::to_string(i + 1) + ".gn", dec[i]));
  }
  decoder_convs_.push_back(add_conv("decoder.conv7", dec[5], 1, 1, {1, 1, 0}, false, rng, 1.0));
  decoder_convs_.back().bias->data()[0] = static_cast<T>(c.output_bias_init);
}

template <typename T>
typename MicroSegNet<T>::Conv MicroSegNet<T>::add_conv(const std::string& name, int cin, int cout, int k,
                                                       ConvSpec spec, bool standardize, Rng& rng,
                                                       double gain) {
  Conv conv;
  conv.spec = spec;
  conv.standardize = standardize;
  conv.weight = make_tensor<T>({cout, cin, k, k});
  const double stddev = gain / std::sqrt(static_cast<double>(cin) * k * k);
  for (auto& v : conv.weight->data()) v = static_cast<T>(rng.normal() * stddev);
  conv.weight->set_requires_grad(true);
  params_.push_back({name + ".weight", ParamKind::ConvWeight, conv.weight});
  if (!standardize) {
    conv.bias = make_tensor<T>({1, cout, 1, 1});
    conv.bias->set_requires_grad(true);
    params_.push_back({name + ".bias", ParamKind::Bias, conv.bias});
  }
  return conv;
}

template <typename T>
typename MicroSegNet<T>::Norm MicroSegNet<T>::add_norm(const std::string& name, int channels) {
  Norm norm;
  norm.groups = config_.groups_for(channels);
  norm.gamma = make_tensor<T>({1, channels, 1, 1}, T{1});
  norm.beta = make_tensor<T>({1, channels, 1, 1}, T{0});
  norm.gamma->set_requires_grad(true);
  norm.beta->set_requires_grad(true);
  params_.push_back({name + ".gamma", ParamKind::NormParam, norm.gamma});
  params_.push_back({name + ".beta", ParamKind::NormParam, norm.beta});
  return norm;
}

template <typename T>
TensorPtr<T> MicroSegNet<T>::apply(Tape<T>& tape, const Conv& conv, const TensorPtr<T>& x) const {
  TensorPtr<T> w = conv.weight;
  if (conv.standardize) w = weight_standardize(tape, w, config_.norm_eps);
  return conv2d(tape, x, w, conv.bias, conv.spec);
}

template <typename T>
TensorPtr<T> MicroSegNet<T>::apply(Tape<T>& tape, const Norm& norm, const TensorPtr<T>& x) const {
  return group_norm(tape, x, norm.groups, norm.gamma, norm.beta, config_.norm_eps);
}

template <typename T>
TensorPtr<T> MicroSegNet<T>::forward(Tape<T>& tape, const NetInputs<T>& in) const {
  const Shape is = in.image->shape();
  require(is.n == 1 && is.c == 3, ErrorCode::Shape, "forward: image must be [1,3,H,W]");
  require(is.h % 8 == 0 && is.w % 8 == 0 && is.h >= 8 && is.w >= 8, ErrorCode::Shape,
          "forward: spatial size must be a positive multiple of 8, got " + is.str());
  require(in.clicks->shape() == Shape{1, kClickChannels, is.h, is.w}, ErrorCode::Shape,
          "forward: click encoding shape " + in.clicks->shape().str());
  require(in.prev_mask->shape() == Shape{1, 1, is.h, is.w}, ErrorCode::Shape,
          "forward: previous mask shape " + in.prev_mask->shape().str());
  const double slope = config_.leaky_slope;
  auto act = [&](const TensorPtr<T>& x) { return leaky_relu(tape, x, slope); };

  // Image stream.
  std::array<TensorPtr<T>, 4> e;
  TensorPtr<T> x = concat_channels(tape, {in.image, in.clicks});
  for (int i = 0; i < 4; ++i) {
    x = act(apply(tape, image_norms_[i], apply(tape, image_convs_[i], x)));
    e[i] = x;
  }

  // Interaction stream.
  std::array<TensorPtr<T>, 6> s{};
  if (config_.interaction_stream) {
    TensorPtr<T> prev = in.prev_mask;
    if (!config_.prev_mask_feedback) prev = make_tensor<T>(in.prev_mask->shape());
    TensorPtr<T> y = concat_channels(tape, {in.clicks, prev});
    for (int i = 0; i < 6; ++i) {
      y = act(apply(tape, interaction_convs_[i], y));
      s[i] = y;
    }
  }
  auto with_interaction = [&](std::vector<TensorPtr<T>> parts, int idx) {
    if (config_.interaction_stream) parts.push_back(s[idx]);
    return concat_channels(tape, parts);
  };

  // Fusion and pyramid pooling.
  const TensorPtr<T> fused = with_interaction({e[3]}, 5);
  std::vector<TensorPtr<T>> ppm_w, ppm_b;
  for (const auto& c : ppm_convs_) {
    ppm_w.push_back(c.weight);
    ppm_b.push_back(c.bias);
  }
  TensorPtr<T> d = pyramid_pool(tape, fused, config_.ppm_bins, ppm_w, ppm_b, slope);

  // Decoder.
  auto conv_act_norm = [&](int i, const TensorPtr<T>& v) {
    return apply(tape, decoder_norms_[i], act(apply(tape, decoder_convs_[i], v)));
  };
  d = conv_act_norm(0, d);
  d = conv_act_norm(1, d);
  d = upsample_bilinear(tape, d, is.h / 4, is.w / 4);
  d = conv_act_norm(2, with_interaction({d, e[1]}, 3));
  d = upsample_bilinear(tape, d, is.h / 2, is.w / 2);
  d = conv_act_norm(3, with_interaction({d, e[0]}, 1));
  d = upsample_bilinear(tape, d, is.h, is.w);
  d = concat_channels(tape, {d, in.image, in.clicks});
  d = act(apply(tape, decoder_convs_[4], d));
  d = act(apply(tape, decoder_convs_[5], d));
  d = apply(tape, decoder_convs_[6], d);
  if (config_.guided_head_in_graph) {
    require(in.guide_luma.size() == static_cast<std::size_t>(is.h) * is.w, ErrorCode::Shape,
            "forward: guided head needs a luminance guide");
    d = guided_filter_op(tape, d, in.guide_luma, config_.guided_radius, config_.guided_eps);
  }
  return clip01(tape, d, config_.restoring_clip ? ClipGrad::Restoring : ClipGrad::Exact);
}

template <typename T>
void MicroSegNet<T>::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

template <typename T>
std::size_t MicroSegNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor->numel();
  return n;
}

template class MicroSegNet<float>;
template class MicroSegNet<double>;
template class MicroSegNet<long double>;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const MicroSegNet<float>& net, const CheckpointMeta& meta) {
  json header;
  header["config"] = json::parse(net.config().to_json());
  json params = json::array();
  for (const auto& p : net.params()) {
    const Shape s = p.tensor->shape();
    params.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  header["params"] = params;
  header["meta"] = json::parse(meta.extra_json);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out{'C', 'S', 'E', 'G'};
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : net.params()) {
    for (float v : p.tensor->data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  return out;
}

void save_checkpoint(const MicroSegNet<float>& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta) {
  const auto bytes = serialize_checkpoint(net, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "checkpoint write failed: " + path.string());
}

std::unique_ptr<MicroSegNet<float>> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "CSEG", 4) == 0, ErrorCode::Format,
          "not a checkpoint (bad magic): " + path.string());
  const std::uint32_t version = get_u32(bytes, 4);
  require(version == kCheckpointVersion, ErrorCode::Format,
          "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t len = get_u32(bytes, 8);
  require(bytes.size() >= 12ull + len, ErrorCode::Format, "truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("checkpoint header: ") + e.what());
  }
  auto net = std::make_unique<MicroSegNet<float>>(NetConfig::from_json(header.at("config").dump()), 0);
  const auto& listed = header.at("params");
  require(listed.size() == net->params().size(), ErrorCode::Format, "checkpoint parameter count mismatch");
  std::size_t pos = 12 + len;
  for (std::size_t i = 0; i < net->params().size(); ++i) {
    auto& p = net->params()[i];
    require(listed[i].at("name").get<std::string>() == p.name, ErrorCode::Format,
            "checkpoint parameter order mismatch at " + p.name);
    auto& data = p.tensor->data();
    require(bytes.size() >= pos + 4 * data.size(), ErrorCode::Format, "truncated checkpoint data");
    for (auto& v : data) {
      const std::uint32_t bits = get_u32(bytes, pos);
      std::memcpy(&v, &bits, 4);
      pos += 4;
    }
  }
  require(pos == bytes.size(), ErrorCode::Format, "trailing bytes in checkpoint");
  if (meta) meta->extra_json = header.contains("meta") ? header["meta"].dump() : "{}";
  return net;
}

template <typename T>
NetInputs<T> make_inputs(const NetConfig& config, const Image& image, const ClickEncoding& clicks,
                         const SoftMask& prev_mask) {
  const int h = image.height();
  const int w = image.width();
  require(clicks.height == h && clicks.width == w && prev_mask.same_shape(image), ErrorCode::Shape,
          "model inputs differ in size");
  NetInputs<T> in;
  in.image = make_tensor<T>({1, 3, h, w});
  const auto src = image.data();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        in.image->at(0, c, y, x) = static_cast<T>(src[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  in.clicks = make_tensor<T>({1, kClickChannels, h, w});
  std::transform(clicks.data.begin(), clicks.data.end(), in.clicks->data().begin(),
                 [](float v) { return static_cast<T>(v); });
  in.prev_mask = make_tensor<T>({1, 1, h, w});
  std::transform(prev_mask.vec().begin(), prev_mask.vec().end(), in.prev_mask->data().begin(),
                 [](float v) { return static_cast<T>(v); });
  if (config.guided_head_in_graph) in.guide_luma = luminance(image);
  return in;
}

template NetInputs<float> make_inputs<float>(const NetConfig&, const Image&, const ClickEncoding&,
                                             const SoftMask&);
template NetInputs<double> make_inputs<double>(const NetConfig&, const Image&, const ClickEncoding&,
                                               const SoftMask&);
template NetInputs<long double> make_inputs<long double>(const NetConfig&, const Image&, const ClickEncoding&,
                                                         const SoftMask&);

namespace {

SoftMask pad_mask_edge(const SoftMask& m, int h, int w) {
  if (m.height() == h && m.width() == w) return m;
  SoftMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = m.at(std::min(y, m.height() - 1), std::min(x, m.width() - 1));
  return out;
}

}  // namespace

SoftMask predict(const MicroSegNet<float>& net, const Image& image, const std::vector<Click>& clicks,
                 const SoftMask& prev_mask, const PredictOptions& options) {
  require(image.same_shape(prev_mask), ErrorCode::Shape, "predict: image/previous mask size mismatch");
  const int h = image.height();
  const int w = image.width();
  // Stride-8 features must hold at least the largest pooling bin count.
  const int min_side = 8 * std::max(1, *std::max_element(net.config().ppm_bins.begin(), net.config().ppm_bins.end()));
  const int ph = std::max(min_side, (h + 7) / 8 * 8);
  const int pw = std::max(min_side, (w + 7) / 8 * 8);
  const Image padded = pad_edge(image, ph, pw);
  const SoftMask prev = pad_mask_edge(prev_mask, ph, pw);
  ClickSigmas sigmas;
  sigmas.values = net.config().click_sigmas;
  const ClickEncoding enc = encode_clicks(clicks, ph, pw, sigmas);
  Tape<float> tape(false);
  const auto out = net.forward(tape, make_inputs<float>(net.config(), padded, enc, prev));
  SoftMask mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) mask.at(y, x) = out->at(0, 0, y, x);
  if (options.guided) mask = guided_filter(image, mask, options.guided_params);
  return mask;
}

}  // namespace clickseg::nn

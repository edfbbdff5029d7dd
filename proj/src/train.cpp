#include "clickseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace clickseg {

using nn::MicroSegNet;
using nn::ParamKind;
using nn::Tape;

RAdam::RAdam(std::vector<nn::Param<float>> params, const RAdamParams& config)
    : params_(std::move(params)), cfg_(config) {
  require(cfg_.beta1 >= 0 && cfg_.beta1 < 1 && cfg_.beta2 > 0 && cfg_.beta2 < 1, ErrorCode::InvalidArgument,
          "RAdam betas must lie in [0, 1)");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor->numel(), 0.0);
    v_.emplace_back(p.tensor->numel(), 0.0);
  }
}

double RAdam::decay_for(ParamKind kind) const {
  switch (kind) {
    case ParamKind::ConvWeight: return cfg_.decay_conv_weight;
    case ParamKind::NormParam: return cfg_.decay_norm;
    case ParamKind::Bias: return cfg_.decay_bias;
  }
  return 0.0;
}

double RAdam::rho(std::int64_t t) const {
  const double b2t = std::pow(cfg_.beta2, static_cast<double>(t));
  const double rho_inf = 2.0 / (1.0 - cfg_.beta2) - 1.0;
  return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
}

void RAdam::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor->has_grad()) continue;
    for (float g : p.tensor->grad_view())
      if (!std::isfinite(g)) fail(ErrorCode::Numeric, "non-finite gradient in parameter " + p.name);
  }
  ++t_;
  const double t = static_cast<double>(t_);
  const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
  const double rho_inf = 2.0 / (1.0 - cfg_.beta2) - 1.0;
  const double rho_t = rho(t_);
  last_rectified_ = rho_t > cfg_.rho_threshold;
  double r = 0.0;
  if (last_rectified_)
    r = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& data = params_[i].tensor->data();
    const bool has_grad = params_[i].tensor->has_grad();
    const auto& grad = params_[i].tensor->grad_view();
    const double decay = decay_for(params_[i].kind);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = has_grad ? grad[j] : 0.0;
      double theta = data[j];
      theta -= lr * decay * theta;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      if (last_rectified_) {
        const double v_hat = std::sqrt(v[j] / bias2);
        theta -= lr * r * m_hat / (v_hat + cfg_.eps);
      } else {
        theta -= lr * m_hat;
      }
      data[j] = static_cast<float>(theta);
    }
  }
}

double LrSchedule::at(int epoch) const {
  double lr = base;
  for (int m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

std::string to_string(TrainMode mode) { return mode == TrainMode::Iterative ? "iterative" : "bundled"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "iterative") return TrainMode::Iterative;
  if (s == "bundled") return TrainMode::Bundled;
  fail(ErrorCode::InvalidArgument, "unknown training mode '" + s + "' (expected iterative or bundled)");
}

namespace {

std::vector<float> gt_values(const BinaryMask& gt) {
  std::vector<float> out(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) out[i] = gt[i] ? 1.0f : 0.0f;
  return out;
}

std::vector<nn::LossClick> loss_clicks(const std::vector<Click>& clicks) {
  std::vector<nn::LossClick> out;
  for (const auto& c : clicks) out.push_back({c.x, c.y});
  return out;
}

// Forward, loss, backward, optimizer step. Returns the loss and the
// prediction made before the update.
std::pair<double, SoftMask> update(MicroSegNet<float>& net, RAdam& opt, const Image& image,
                                   const std::vector<float>& gt, const std::vector<Click>& clicks,
                                   const SoftMask& prev, double lr) {
  ClickSigmas sigmas;
  sigmas.values = net.config().click_sigmas;
  const auto enc = encode_clicks(clicks, image.height(), image.width(), sigmas);
  Tape<float> tape(true);
  net.zero_grad();
  const auto out = net.forward(tape, nn::make_inputs<float>(net.config(), image, enc, prev));
  const auto lc = loss_clicks(clicks);
  const auto loss = nn::soft_iou_click_loss<float>(tape, out, gt, lc);
  tape.backward(loss);
  opt.step(lr);
  SoftMask pred(image.height(), image.width(), std::vector<float>(out->data().begin(), out->data().end()));
  return {loss->data()[0], std::move(pred)};
}

}  // namespace

std::vector<double> train_image_iterative(MicroSegNet<float>& net, RAdam& opt, const Image& image,
                                          const BinaryMask& gt, int clicks_per_image, double lr) {
  require(clicks_per_image >= 1, ErrorCode::InvalidArgument, "clicks per image must be >= 1");
  require(image.same_shape(gt), ErrorCode::Shape, "image/ground-truth size mismatch");
  require(count_foreground(gt) > 0, ErrorCode::InvalidArgument, "ground truth is empty");
  const auto target = gt_values(gt);
  SoftMask prev(image.height(), image.width(), 0.0f);
  std::vector<Click> clicks;
  std::vector<double> losses;
  for (int k = 1; k <= clicks_per_image; ++k) {
    const auto placement = place_next_click(prev, gt, k);
    if (!placement) break;
    clicks.push_back(placement->click);
    auto [loss, pred] = update(net, opt, image, target, clicks, prev, lr);
    losses.push_back(loss);
    prev = std::move(pred);
  }
  return losses;
}

double train_image_bundled(MicroSegNet<float>& net, RAdam& opt, const Image& image, const BinaryMask& gt,
                           const BundledClickParams& params, double lr, Rng& rng) {
  require(image.same_shape(gt), ErrorCode::Shape, "image/ground-truth size mismatch");
  require(count_foreground(gt) > 0, ErrorCode::InvalidArgument, "ground truth is empty");
  const auto clicks = bundled_clicks(gt, rng, params);
  const SoftMask zero(image.height(), image.width(), 0.0f);
  return update(net, opt, image, gt_values(gt), clicks, zero, lr).first;
}

std::string TrainLogEntry::to_json(TrainMode mode) const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["image"] = image_id;
  j["mode"] = to_string(mode);
  j["lr"] = lr;
  j["losses"] = losses;
  return j.dump();
}

TrainResult train(MicroSegNet<float>& net, const std::vector<TrainSample>& samples, const TrainConfig& cfg,
                  const std::function<void(const TrainLogEntry&)>& on_entry) {
  require(!samples.empty(), ErrorCode::InvalidArgument, "no training samples");
  require(cfg.epochs >= 0, ErrorCode::InvalidArgument, "epochs must be >= 0");
  require(cfg.crop % 8 == 0 && cfg.crop >= 8, ErrorCode::InvalidArgument, "crop must be a multiple of 8");
  RAdam opt(net.params(), cfg.optimizer);
  Rng rng(cfg.seed);
  AugmentParams aug = cfg.augment_params;
  aug.crop_height = aug.crop_width = cfg.crop;
  TrainResult result;
  std::vector<std::size_t> order(samples.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
    for (std::size_t idx : order) {
      const auto& s = samples[idx];
      Image image;
      BinaryMask gt;
      if (cfg.augment) {
        auto a = augment(s.image, s.gt, rng, aug);
        image = std::move(a.image);
        gt = std::move(a.mask);
      } else {
        require(s.image.height() == cfg.crop && s.image.width() == cfg.crop, ErrorCode::Shape,
                "without augmentation, samples must already be crop-sized");
        image = s.image;
        gt = s.gt;
      }
      TrainLogEntry entry{epoch, s.id, lr, {}};
      if (cfg.mode == TrainMode::Iterative) {
        entry.losses = train_image_iterative(net, opt, image, gt, cfg.clicks_per_image, lr);
      } else {
        entry.losses = {train_image_bundled(net, opt, image, gt, cfg.bundled, lr, rng)};
      }
      if (on_entry) on_entry(entry);
      result.log.push_back(std::move(entry));
    }
  }
  result.steps = opt.steps();
  return result;
}

std::string train_meta_json(const TrainConfig& cfg, std::size_t samples) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(cfg.mode);
  j["clicks_per_image"] = cfg.clicks_per_image;
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.schedule.base;
  j["milestones"] = cfg.schedule.milestones;
  j["seed"] = cfg.seed;
  j["crop"] = cfg.crop;
  j["augment"] = cfg.augment;
  j["samples"] = samples;
  return j.dump();
}

}  // namespace clickseg

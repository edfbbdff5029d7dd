#pragma once

// Click-by-click training, the bundled-click baseline, and RAdam.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clickseg/clicks.hpp"
#include "clickseg/image.hpp"
#include "clickseg/net.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

struct RAdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // The variance rectification is used once rho_t exceeds this value;
  // before that the step is plain momentum SGD on the bias-corrected mean.
  double rho_threshold = 4.0;
  // Decoupled decay, applied as theta -= lr * decay * theta.
  double decay_conv_weight = 0.005;
  double decay_norm = 1e-5;
  double decay_bias = 0.0;
};

// Rectified Adam over a MicroSegNet<float> parameter list.
class RAdam {
 public:
  RAdam(std::vector<nn::Param<float>> params, const RAdamParams& config = {});

  // One update from the parameters' current gradients. A non-finite gradient
  // throws Error(Numeric) naming the parameter, before anything is modified.
  void step(double lr);

  std::int64_t steps() const noexcept { return t_; }
  bool last_step_rectified() const noexcept { return last_rectified_; }
  double rho(std::int64_t t) const;
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }
  const RAdamParams& config() const noexcept { return cfg_; }

 private:
  double decay_for(nn::ParamKind kind) const;

  std::vector<nn::Param<float>> params_;
  RAdamParams cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
  bool last_rectified_ = false;
};

// Step schedule: base * factor^(number of milestones <= epoch), epochs
// counted from 0.
struct LrSchedule {
  double base = 1e-3;
  std::vector<int> milestones{14, 17, 20};
  double factor = 0.1;

  double at(int epoch) const;
};

enum class TrainMode { Iterative, Bundled };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::Iterative;
  int clicks_per_image = 4;
  int epochs = 25;
  LrSchedule schedule{};
  int crop = 96;
  std::uint64_t seed = 7;
  bool augment = true;
  AugmentParams augment_params{};
  RAdamParams optimizer{};
  BundledClickParams bundled{};
};

struct TrainSample {
  std::string id;
  Image image;
  BinaryMask gt;
};

// One image, click by click: the first previous mask is zero, each click is
// placed on the current prediction's largest error region, and the model is
// updated after every click with the loss over all clicks so far. Stops early
// when the prediction is already perfect. Returns the per-click losses.
std::vector<double> train_image_iterative(nn::MicroSegNet<float>& net, RAdam& opt, const Image& image,
                                          const BinaryMask& gt, int clicks_per_image, double lr);

// Baseline: one update with a bundled random click set and a zero previous
// mask.
double train_image_bundled(nn::MicroSegNet<float>& net, RAdam& opt, const Image& image, const BinaryMask& gt,
                           const BundledClickParams& params, double lr, Rng& rng);

struct TrainLogEntry {
  int epoch = 0;
  std::string image_id;
  double lr = 0.0;
  std::vector<double> losses;

  std::string to_json(TrainMode mode) const;
};

struct TrainResult {
  std::int64_t steps = 0;
  std::vector<TrainLogEntry> log;
};

// Full schedule over `samples`. Image order is reshuffled every epoch from
// the config seed; the callback sees each log entry as it is produced.
TrainResult train(nn::MicroSegNet<float>& net, const std::vector<TrainSample>& samples, const TrainConfig& cfg,
                  const std::function<void(const TrainLogEntry&)>& on_entry = {});

std::string train_meta_json(const TrainConfig& cfg, std::size_t samples);

}  // namespace clickseg

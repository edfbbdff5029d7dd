#pragma once

// Click protocol runner, benchmark reports and their serialization.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clickseg/clicks.hpp"
#include "clickseg/image.hpp"
#include "clickseg/metrics.hpp"
#include "clickseg/net.hpp"
#include "clickseg/synth.hpp"

namespace clickseg {

// Anything that maps (image, clicks so far, previous prediction) to a new
// prediction.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual SoftMask predict(const Image& image, const std::vector<Click>& clicks, const SoftMask& prev) = 0;
  // An independent instance for another worker thread, or null if the
  // segmenter cannot be replicated (the runner then stays single-threaded).
  virtual std::unique_ptr<Segmenter> clone() const { return nullptr; }
};

class NetSegmenter final : public Segmenter {
 public:
  NetSegmenter(std::shared_ptr<const nn::MicroSegNet<float>> net, nn::PredictOptions options = {});
  SoftMask predict(const Image& image, const std::vector<Click>& clicks, const SoftMask& prev) override;
  std::unique_ptr<Segmenter> clone() const override;

 private:
  std::shared_ptr<const nn::MicroSegNet<float>> net_;
  nn::PredictOptions options_;
};

// Talks to a child process over JSON lines. For every prediction it writes
//   {"image": path, "clicks": [{"x","y","pos","k"}...], "prev_mask": path, "out": path}
// to the child's stdin and expects one line back:
//   {"mask": path}          or   {"error": message}
// Masks are 8-bit grayscale PNGs (value / 255). Images and masks are written
// to a scratch directory owned by the adapter.
class ExternalSegmenter final : public Segmenter {
 public:
  explicit ExternalSegmenter(const std::string& command);
  ~ExternalSegmenter() override;
  ExternalSegmenter(const ExternalSegmenter&) = delete;
  ExternalSegmenter& operator=(const ExternalSegmenter&) = delete;

  SoftMask predict(const Image& image, const std::vector<Click>& clicks, const SoftMask& prev) override;

 private:
  void close_child();

  std::filesystem::path scratch_;
  int socket_ = -1;  // child's stdin and stdout
  int pid_ = -1;
  std::string pending_;
  std::uint64_t calls_ = 0;
};

struct BenchSample {
  std::string id;
  Image image;
  BinaryMask gt;
  // Pixels excluded from scoring (e.g. an unlabeled boundary band).
  std::optional<BinaryMask> ignore;
};

// images/<id>.png with masks/<id>.png. Mask pixels equal to 128 (gray) are
// read as "ignore"; everything else is binarized at half scale.
std::vector<BenchSample> load_dataset(const std::filesystem::path& dir);
std::vector<BenchSample> dataset_from_manifest(const AssetPool& pool, const std::vector<ManifestEntry>& entries,
                                               int crop = 96);

struct ProtocolConfig {
  int max_clicks = 20;
  std::vector<double> thresholds{0.85, 0.90, 0.95, 0.99};
  std::uint64_t seed = 0;
  bool guided = false;
  int workers = 1;
  std::string method = "clickseg";
  std::string dataset;
  std::string checkpoint;
};

struct ImageRun {
  IoUCurve curve;
  std::vector<Click> clicks;
  // correction[k-1]: fraction of click k's error region that the prediction
  // after click k gets right; absent once no click could be placed.
  std::vector<std::optional<double>> correction;
};

// Runs one image: zero previous mask, K simulated clicks, IoU of the
// 0.5-binarized prediction after each. Once the prediction is perfect the
// remaining curve is padded with the current IoU.
ImageRun run_image(Segmenter& model, const BenchSample& sample, int max_clicks);

struct BenchmarkReport {
  ProtocolConfig config;
  std::vector<ImageRun> runs;  // sorted by image id
  std::vector<double> mean_curve;
  AucSummary auc;
  std::vector<double> mean_noc;                      // per threshold
  std::vector<std::vector<double>> proportions;      // [threshold][click - 1]
  std::vector<std::optional<double>> correction_curve;  // mean over images with a click at k
};

BenchmarkReport run_protocol(Segmenter& model, const std::vector<BenchSample>& dataset, const ProtocolConfig& cfg);

// Aggregates from per-image runs (used by run_protocol and by report
// readers to cross-check serialized numbers).
BenchmarkReport summarize(const ProtocolConfig& cfg, std::vector<ImageRun> runs);

inline constexpr const char* kReportSchema = "clickseg-report/1";

std::string report_to_json(const BenchmarkReport& report);
BenchmarkReport report_from_json(const std::string& text);
std::string report_to_csv(const BenchmarkReport& report);

// Mean IoU-per-click curves, one polyline per report (labelled by method).
std::string render_report_svg(const std::vector<BenchmarkReport>& reports);

}  // namespace clickseg

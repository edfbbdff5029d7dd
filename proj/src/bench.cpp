#include "clickseg/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace clickseg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

NetSegmenter::NetSegmenter(std::shared_ptr<const nn::MicroSegNet<float>> net, nn::PredictOptions options)
    : net_(std::move(net)), options_(options) {
  require(net_ != nullptr, ErrorCode::InvalidArgument, "null model");
}

SoftMask NetSegmenter::predict(const Image& image, const std::vector<Click>& clicks, const SoftMask& prev) {
  return nn::predict(*net_, image, clicks, prev, options_);
}

// Inference never touches gradient buffers, so replicas can share weights.
std::unique_ptr<Segmenter> NetSegmenter::clone() const { return std::make_unique<NetSegmenter>(net_, options_); }

// ---------------------------------------------------------------------------
// External process adapter

ExternalSegmenter::ExternalSegmenter(const std::string& command) {
  static std::atomic<std::uint64_t> counter{0};
  scratch_ = fs::temp_directory_path() /
             ("clickseg-ext-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::create_directories(scratch_);
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) fail(ErrorCode::Io, "socketpair failed");
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    fail(ErrorCode::Io, "fork failed");
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  socket_ = fds[0];
  pid_ = pid;
}

ExternalSegmenter::~ExternalSegmenter() {
  close_child();
  std::error_code ec;
  fs::remove_all(scratch_, ec);
}

void ExternalSegmenter::close_child() {
  if (socket_ >= 0) {
    ::close(socket_);
    socket_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

SoftMask ExternalSegmenter::predict(const Image& image, const std::vector<Click>& clicks, const SoftMask& prev) {
  require(socket_ >= 0, ErrorCode::State, "external segmenter is not running");
  const std::string tag = std::to_string(calls_++);
  const fs::path image_path = scratch_ / ("image-" + tag + ".png");
  const fs::path prev_path = scratch_ / ("prev-" + tag + ".png");
  const fs::path out_path = scratch_ / ("out-" + tag + ".png");
  save_image(image, image_path);
  save_mask(prev, prev_path);
  ordered_json req;
  req["image"] = image_path.string();
  req["clicks"] = nlohmann::json::parse(clicks_to_json(clicks));
  req["prev_mask"] = prev_path.string();
  req["out"] = out_path.string();
  const std::string line = req.dump() + "\n";
  for (std::size_t sent = 0; sent < line.size();) {
    const ssize_t n = ::send(socket_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) fail(ErrorCode::Io, "external segmenter closed its input");
    sent += static_cast<std::size_t>(n);
  }
  std::size_t eol;
  while ((eol = pending_.find('\n')) == std::string::npos) {
    char buf[4096];
    const ssize_t n = ::recv(socket_, buf, sizeof buf, 0);
    if (n <= 0) fail(ErrorCode::Io, "external segmenter exited without a reply");
    pending_.append(buf, static_cast<std::size_t>(n));
  }
  const std::string reply = pending_.substr(0, eol);
  pending_.erase(0, eol + 1);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::Format, "external segmenter sent a malformed reply: " + reply);
  }
  if (j.contains("error")) fail(ErrorCode::Internal, "external segmenter: " + j["error"].dump());
  require(j.contains("mask") && j["mask"].is_string(), ErrorCode::Format, "external reply lacks \"mask\"");
  SoftMask mask = load_soft_mask(j["mask"].get<std::string>());
  require(mask.same_shape(image), ErrorCode::Shape, "external mask size differs from the image");
  fs::remove(image_path);
  fs::remove(prev_path);
  return mask;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

fs::path find_mask(const fs::path& dir, const std::string& id) {
  for (const char* ext : {".png", ".pgm", ".ppm"}) {
    const fs::path p = dir / "masks" / (id + ext);
    if (fs::exists(p)) return p;
  }
  fail(ErrorCode::NotFound, "no mask for image '" + id + "' under " + (dir / "masks").string());
}

}  // namespace

std::vector<BenchSample> load_dataset(const fs::path& dir) {
  require(fs::is_directory(dir / "images"), ErrorCode::NotFound, "dataset has no images/ directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "images")) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".png" || ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::NotFound, "dataset is empty: " + dir.string());
  std::vector<BenchSample> out;
  for (const auto& f : files) {
    BenchSample s;
    s.id = f.stem().string();
    s.image = load_image(f);
    const RasterFile raster = read_raster(find_mask(dir, s.id));
    require(raster.height == s.image.height() && raster.width == s.image.width(), ErrorCode::Shape,
            "mask size differs from image for '" + s.id + "'");
    s.gt = BinaryMask(raster.height, raster.width);
    BinaryMask ignore(raster.height, raster.width);
    const std::uint32_t void_value = raster.max_value == 255 ? 128u : 128u * 257u;
    bool any_ignore = false;
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
      const std::uint32_t v = raster.samples[i * raster.channels];
      if (v == void_value) {
        ignore[i] = 1;
        any_ignore = true;
      } else {
        s.gt[i] = 2 * v > static_cast<std::uint32_t>(raster.max_value) ? 1 : 0;
      }
    }
    if (any_ignore) s.ignore = std::move(ignore);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<BenchSample> dataset_from_manifest(const AssetPool& pool, const std::vector<ManifestEntry>& entries,
                                               int crop) {
  std::vector<BenchSample> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto s = pool.render(entries[i], crop);
    out.push_back({sample_id(i), std::move(s.image), std::move(s.mask), std::nullopt});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Protocol

namespace {

// Prediction as scored: ignored pixels are forced to agree with the gt.
SoftMask scored(const SoftMask& pred, const BenchSample& s) {
  if (!s.ignore) return pred;
  SoftMask out = pred;
  for (std::size_t i = 0; i < out.size(); ++i)
    if ((*s.ignore)[i]) out[i] = s.gt[i] ? 1.0f : 0.0f;
  return out;
}

}  // namespace

ImageRun run_image(Segmenter& model, const BenchSample& sample, int max_clicks) {
  require(max_clicks >= 1, ErrorCode::InvalidArgument, "click budget must be >= 1");
  require(sample.image.same_shape(sample.gt), ErrorCode::Shape, "image/mask size mismatch for " + sample.id);
  ImageRun run;
  run.curve.image_id = sample.id;
  SoftMask prev(sample.image.height(), sample.image.width(), 0.0f);
  double current = iou(binarize(scored(prev, sample), 0.5), sample.gt);
  for (int k = 1; k <= max_clicks; ++k) {
    const auto placement = place_next_click(scored(prev, sample), sample.gt, k);
    if (!placement) {
      run.curve.values.push_back(current);
      run.correction.push_back(std::nullopt);
      continue;
    }
    run.clicks.push_back(placement->click);
    SoftMask pred = model.predict(sample.image, run.clicks, prev);
    require(pred.same_shape(sample.image), ErrorCode::Shape, "segmenter returned a mask of the wrong size");
    const SoftMask view = scored(pred, sample);
    current = iou(binarize(view, 0.5), sample.gt);
    run.curve.values.push_back(current);
    run.correction.push_back(correction_accuracy(view, sample.gt, placement->region_indices));
    prev = std::move(pred);
  }
  return run;
}

BenchmarkReport summarize(const ProtocolConfig& cfg, std::vector<ImageRun> runs) {
  require(!runs.empty(), ErrorCode::InvalidArgument, "no image runs to summarize");
  std::sort(runs.begin(), runs.end(),
            [](const ImageRun& a, const ImageRun& b) { return a.curve.image_id < b.curve.image_id; });
  BenchmarkReport r;
  r.config = cfg;
  r.runs = std::move(runs);
  std::vector<IoUCurve> curves;
  for (const auto& run : r.runs) curves.push_back(run.curve);
  r.mean_curve = mean_curve(curves);
  r.auc = auc(curves);
  for (double t : cfg.thresholds) r.mean_noc.push_back(mean_noc(curves, t));
  std::vector<int> ks(cfg.max_clicks);
  for (int k = 1; k <= cfg.max_clicks; ++k) ks[k - 1] = k;
  r.proportions = threshold_proportions(curves, cfg.thresholds, ks);
  for (int k = 0; k < cfg.max_clicks; ++k) {
    double sum = 0.0;
    int n = 0;
    for (const auto& run : r.runs)
      if (k < static_cast<int>(run.correction.size()) && run.correction[k]) {
        sum += *run.correction[k];
        ++n;
      }
    r.correction_curve.push_back(n ? std::optional<double>(sum / n) : std::nullopt);
  }
  return r;
}

BenchmarkReport run_protocol(Segmenter& model, const std::vector<BenchSample>& dataset, const ProtocolConfig& cfg) {
  require(!dataset.empty(), ErrorCode::InvalidArgument, "dataset is empty");
  require(cfg.max_clicks >= 1, ErrorCode::InvalidArgument, "click budget must be >= 1");
  require(std::is_sorted(cfg.thresholds.begin(), cfg.thresholds.end()), ErrorCode::InvalidArgument,
          "thresholds must be sorted");
  std::vector<ImageRun> runs(dataset.size());
  std::vector<std::unique_ptr<Segmenter>> replicas;
  const int workers = std::clamp(cfg.workers, 1, static_cast<int>(dataset.size()));
  for (int w = 1; w < workers; ++w) {
    auto r = model.clone();
    if (!r) break;
    replicas.push_back(std::move(r));
  }
  if (replicas.empty()) {
    for (std::size_t i = 0; i < dataset.size(); ++i) runs[i] = run_image(model, dataset[i], cfg.max_clicks);
  } else {
    const std::size_t n_workers = replicas.size() + 1;
    std::vector<std::exception_ptr> errors(n_workers);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < n_workers; ++w) {
      Segmenter& m = w == 0 ? model : *replicas[w - 1];
      threads.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < dataset.size(); i += n_workers)
            runs[i] = run_image(m, dataset[i], cfg.max_clicks);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return summarize(cfg, std::move(runs));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ordered_json optional_list(const std::vector<std::optional<double>>& v) {
  ordered_json a = ordered_json::array();
  for (const auto& x : v) a.push_back(x ? ordered_json(*x) : ordered_json(nullptr));
  return a;
}

std::vector<std::optional<double>> optional_list(const nlohmann::json& a) {
  std::vector<std::optional<double>> out;
  for (const auto& x : a) out.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
  return out;
}

}  // namespace

std::string report_to_json(const BenchmarkReport& r) {
  ordered_json j;
  j["schema"] = kReportSchema;
  j["method"] = r.config.method;
  ordered_json cfg;
  cfg["max_clicks"] = r.config.max_clicks;
  cfg["noc_cap"] = r.config.max_clicks;
  cfg["thresholds"] = r.config.thresholds;
  cfg["seed"] = r.config.seed;
  cfg["guided"] = r.config.guided;
  cfg["dataset"] = r.config.dataset;
  cfg["checkpoint"] = r.config.checkpoint;
  j["config"] = cfg;
  ordered_json images = ordered_json::array();
  for (const auto& run : r.runs) {
    ordered_json im;
    im["id"] = run.curve.image_id;
    im["curve"] = run.curve.values;
    im["clicks"] = ordered_json::parse(clicks_to_json(run.clicks));
    im["correction"] = optional_list(run.correction);
    images.push_back(im);
  }
  j["images"] = images;
  j["mean_curve"] = r.mean_curve;
  j["auc"] = {{"mean", r.auc.mean}, {"ci95_normal", r.auc.ci95}};
  ordered_json noc = ordered_json::array();
  for (std::size_t t = 0; t < r.config.thresholds.size(); ++t)
    noc.push_back({{"threshold", r.config.thresholds[t]}, {"mean", r.mean_noc[t]}});
  j["noc"] = noc;
  std::vector<int> ks(r.config.max_clicks);
  for (int k = 1; k <= r.config.max_clicks; ++k) ks[k - 1] = k;
  j["threshold_proportions"] = {
      {"thresholds", r.config.thresholds}, {"clicks", ks}, {"values", r.proportions}};
  j["correction_accuracy"] = optional_list(r.correction_curve);
  return j.dump(2) + "\n";
}

BenchmarkReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    require(j.value("schema", std::string()) == kReportSchema, ErrorCode::Format,
            std::string("report schema is not ") + kReportSchema);
    BenchmarkReport r;
    r.config.method = j.at("method").get<std::string>();
    const auto& cfg = j.at("config");
    r.config.max_clicks = cfg.at("max_clicks").get<int>();
    r.config.thresholds = cfg.at("thresholds").get<std::vector<double>>();
    r.config.seed = cfg.at("seed").get<std::uint64_t>();
    r.config.guided = cfg.at("guided").get<bool>();
    r.config.dataset = cfg.at("dataset").get<std::string>();
    r.config.checkpoint = cfg.at("checkpoint").get<std::string>();
    for (const auto& im : j.at("images")) {
      ImageRun run;
      run.curve.image_id = im.at("id").get<std::string>();
      run.curve.values = im.at("curve").get<std::vector<double>>();
      run.clicks = clicks_from_json(im.at("clicks").dump());
      run.correction = optional_list(im.at("correction"));
      r.runs.push_back(std::move(run));
    }
    r.mean_curve = j.at("mean_curve").get<std::vector<double>>();
    r.auc.mean = j.at("auc").at("mean").get<double>();
    r.auc.ci95 = j.at("auc").at("ci95_normal").get<double>();
    for (const auto& n : j.at("noc")) r.mean_noc.push_back(n.at("mean").get<double>());
    r.proportions = j.at("threshold_proportions").at("values").get<std::vector<std::vector<double>>>();
    r.correction_curve = optional_list(j.at("correction_accuracy"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed report: ") + e.what());
  }
}

std::string report_to_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "image_id";
  for (int k = 1; k <= r.config.max_clicks; ++k) out << ",iou@" << k;
  out << '\n';
  for (const auto& run : r.runs) {
    out << run.curve.image_id;
    for (double v : run.curve.values) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_report_svg(const std::vector<BenchmarkReport>& reports) {
  require(!reports.empty(), ErrorCode::InvalidArgument, "no reports to plot");
  static const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  const double width = 640, height = 400, left = 60, right = 170, top = 20, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  int k_max = 1;
  double y_min = 1.0;
  for (const auto& r : reports) {
    k_max = std::max(k_max, static_cast<int>(r.mean_curve.size()));
    for (double v : r.mean_curve) y_min = std::min(y_min, v);
  }
  y_min = std::max(0.0, std::floor(y_min * 10.0) / 10.0);
  if (y_min >= 1.0) y_min = 0.9;
  auto px = [&](double k) { return left + (k_max == 1 ? pw / 2 : (k - 1) / (k_max - 1) * pw); };
  auto py = [&](double v) { return top + (1.0 - (v - y_min) / (1.0 - y_min)) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = y_min + (1.0 - y_min) * i / 5.0;
    s << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
      << fmt(py(v)) << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py(v) + 4) << "\" text-anchor=\"end\">" << fmt(v)
      << "</text>\n";
  }
  for (int k = 1; k <= k_max; ++k) {
    if (k_max > 10 && k % 5 != 0 && k != 1) continue;
    s << "<text x=\"" << fmt(px(k)) << "\" y=\"" << fmt(top + ph + 16) << "\" text-anchor=\"middle\">" << k
      << "</text>\n";
  }
  s << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(height - 12)
    << "\" text-anchor=\"middle\">number of clicks</text>\n";
  s << "<text transform=\"translate(16 " << fmt(top + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">mean IoU</text>\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const char* color = palette[i % std::size(palette)];
    const auto& r = reports[i];
    s << "<polyline class=\"curve\" data-method=\"" << xml_escape(r.config.method) << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < r.mean_curve.size(); ++k)
      s << (k ? " " : "") << fmt(px(static_cast<double>(k + 1))) << ',' << fmt(py(r.mean_curve[k]));
    s << "\"/>\n";
    const double ly = top + 14 + 18.0 * i;
    s << "<line x1=\"" << fmt(left + pw + 12) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(left + pw + 32)
      << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << fmt(left + pw + 38) << "\" y=\"" << fmt(ly) << "\">" << xml_escape(r.config.method)
      << " (AuC " << fmt(r.auc.mean) << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace clickseg

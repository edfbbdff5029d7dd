#include "clickseg/clickseg.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "clickseg/bench.hpp"
#include "clickseg/clicks.hpp"
#include "clickseg/net.hpp"
#include "clickseg/serve.hpp"
#include "clickseg/synth.hpp"
#include "clickseg/train.hpp"

#ifndef CLICKSEG_VERSION
#define CLICKSEG_VERSION "0.0.0"
#endif
#ifndef CLICKSEG_ASSET_DIR
#define CLICKSEG_ASSET_DIR ""
#endif

using namespace clickseg;
using json = nlohmann::json;

struct cseg_model {
  std::shared_ptr<nn::MicroSegNet<float>> net;
  std::string meta = "{}";
};

struct cseg_server {
  std::shared_ptr<SessionManager> sessions;
  std::unique_ptr<Server> server;
};

namespace {

thread_local std::string g_last_error;

cseg_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return CSEG_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return CSEG_ERR_IO;
    case ErrorCode::Format: return CSEG_ERR_FORMAT;
    case ErrorCode::Shape: return CSEG_ERR_SHAPE;
    case ErrorCode::NotFound: return CSEG_ERR_NOT_FOUND;
    case ErrorCode::AlreadyCorrect: return CSEG_ERR_ALREADY_CORRECT;
    case ErrorCode::Numeric: return CSEG_ERR_NUMERIC;
    case ErrorCode::State: return CSEG_ERR_STATE;
    case ErrorCode::Internal: return CSEG_ERR_INTERNAL;
  }
  return CSEG_ERR_INTERNAL;
}

template <typename F>
cseg_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return CSEG_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("bad JSON: ") + e.what();
    return CSEG_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CSEG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CSEG_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

// Parses an options object and rejects keys outside `allowed`.
json options(const char* text, std::initializer_list<const char*> allowed) {
  json j = text && *text ? json::parse(text) : json::object();
  require(j.is_object(), ErrorCode::InvalidArgument, "options must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    require(ok.count(k) > 0, ErrorCode::InvalidArgument, "unknown option '" + k + "'");
  return j;
}

template <typename T>
T opt(const json& j, const char* key, T fallback) {
  return j.contains(key) && !j[key].is_null() ? j[key].get<T>() : fallback;
}

std::string required_string(const json& j, const char* key) {
  require(j.contains(key) && j[key].is_string() && !j[key].get<std::string>().empty(), ErrorCode::InvalidArgument,
          std::string("option '") + key + "' is required");
  return j[key].get<std::string>();
}

std::filesystem::path asset_dir(const json& j, const char* key, const char* sub) {
  if (j.contains(key)) return j[key].get<std::string>();
  const std::string base = CLICKSEG_ASSET_DIR;
  require(!base.empty(), ErrorCode::InvalidArgument, std::string("option '") + key + "' is required");
  return std::filesystem::path(base) / sub;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::Io, "cannot write " + path.string());
  f << text;
  require(f.good(), ErrorCode::Io, "write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::Io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

GuidedFilterParams guided_params(int radius, double eps) {
  require(radius >= 1, ErrorCode::InvalidArgument, "guided filter radius must be >= 1");
  require(eps > 0.0 && std::isfinite(eps), ErrorCode::InvalidArgument, "guided filter eps must be positive");
  return {radius, eps};
}

SynthParams synth_params(const json& j) {
  SynthParams p;
  p.crop = opt(j, "crop", p.crop);
  p.scale_min = opt(j, "scale_min", p.scale_min);
  p.scale_max = opt(j, "scale_max", p.scale_max);
  p.flip_probability = opt(j, "flip_probability", p.flip_probability);
  return p;
}

}  // namespace

extern "C" {

const char* cseg_last_error(void) { return g_last_error.c_str(); }

const char* cseg_status_name(cseg_status status) {
  switch (status) {
    case CSEG_OK: return "ok";
    case CSEG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case CSEG_ERR_IO: return "io";
    case CSEG_ERR_FORMAT: return "format";
    case CSEG_ERR_SHAPE: return "shape";
    case CSEG_ERR_NOT_FOUND: return "not_found";
    case CSEG_ERR_ALREADY_CORRECT: return "already_correct";
    case CSEG_ERR_NUMERIC: return "numeric";
    case CSEG_ERR_STATE: return "state";
    case CSEG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* cseg_version(void) { return CLICKSEG_VERSION; }

void cseg_string_free(char* s) { std::free(s); }

const char* cseg_default_asset_dir(void) { return CLICKSEG_ASSET_DIR; }

cseg_status cseg_model_create(const char* config_json, uint64_t seed, cseg_model** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    const auto cfg = config_json && *config_json ? nn::NetConfig::from_json(config_json) : nn::NetConfig{};
    auto m = std::make_unique<cseg_model>();
    m->net = std::make_shared<nn::MicroSegNet<float>>(cfg, seed);
    *out = m.release();
  });
}

cseg_status cseg_model_load(const char* path, cseg_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto m = std::make_unique<cseg_model>();
    nn::CheckpointMeta meta;
    m->net = nn::load_checkpoint(path, &meta);
    m->meta = meta.extra_json;
    *out = m.release();
  });
}

cseg_status cseg_model_save(const cseg_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    nn::save_checkpoint(*model->net, path, {model->meta});
  });
}

cseg_status cseg_model_info(const cseg_model* model, char** json_out) {
  return guarded([&] {
    need(model, "model");
    need(json_out, "json_out");
    json j;
    j["config"] = json::parse(model->net->config().to_json());
    j["parameters"] = model->net->parameter_count();
    j["meta"] = json::parse(model->meta);
    *json_out = dup_string(j.dump());
  });
}

void cseg_model_free(cseg_model* model) { delete model; }

cseg_status cseg_next_click(const float* pred, const uint8_t* gt, int height, int width, int* x, int* y,
                            int* positive) {
  return guarded([&] {
    need(pred, "pred");
    need(gt, "gt");
    need(x, "x");
    need(y, "y");
    need(positive, "positive");
    require(height > 0 && width > 0, ErrorCode::Shape, "height and width must be positive");
    const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    SoftMask p(height, width, std::vector<float>(pred, pred + n));
    BinaryMask g(height, width);
    for (std::size_t i = 0; i < n; ++i) g[i] = gt[i] ? 1 : 0;
    const Click c = next_click(p, g);
    *x = c.x;
    *y = c.y;
    *positive = c.positive ? 1 : 0;
  });
}

cseg_status cseg_simulate_click_files(const char* pred_path, const char* gt_path, int ordinal,
                                      char** click_json_out) {
  return guarded([&] {
    need(pred_path, "pred_path");
    need(gt_path, "gt_path");
    need(click_json_out, "click_json_out");
    const auto pred = load_soft_mask(pred_path);
    const auto gt = load_binary_mask(gt_path);
    const Click c = next_click(pred, gt, ordinal);
    json j = {{"x", c.x}, {"y", c.y}, {"pos", c.positive}, {"k", c.ordinal}};
    *click_json_out = dup_string(j.dump());
  });
}

cseg_status cseg_refine(const cseg_model* model, const char* image_path, const char* clicks_json,
                        const char* prev_mask_path, int guided, int radius, double eps,
                        const char* out_mask_path) {
  return guarded([&] {
    need(model, "model");
    need(image_path, "image_path");
    need(clicks_json, "clicks_json");
    need(out_mask_path, "out_mask_path");
    const Image image = load_image(image_path);
    const auto clicks = clicks_from_json(clicks_json);
    for (const auto& c : clicks)
      require(c.x >= 0 && c.y >= 0 && c.x < image.width() && c.y < image.height(), ErrorCode::InvalidArgument,
              "click outside the image");
    SoftMask prev(image.height(), image.width(), 0.0f);
    if (prev_mask_path && *prev_mask_path) {
      prev = load_soft_mask(prev_mask_path);
      require(image.same_shape(prev), ErrorCode::Shape, "previous mask size differs from the image");
    }
    nn::PredictOptions po;
    po.guided = guided != 0;
    po.guided_params = guided_params(radius, eps);
    save_mask(nn::predict(*model->net, image, clicks, prev, po), out_mask_path);
  });
}

cseg_status cseg_guided_filter_files(const char* mask_path, const char* guide_path, int radius, double eps,
                                     const char* out_mask_path) {
  return guarded([&] {
    need(mask_path, "mask_path");
    need(guide_path, "guide_path");
    need(out_mask_path, "out_mask_path");
    const auto mask = load_soft_mask(mask_path);
    const Image guide = load_image(guide_path);
    require(guide.same_shape(mask), ErrorCode::Shape, "guide and mask sizes differ");
    save_mask(guided_filter(guide, mask, guided_params(radius, eps)), out_mask_path);
  });
}

cseg_status cseg_synthgen(const char* options_json, char** summary_json_out) {
  return guarded([&] {
    const json j = options(options_json, {"fg", "bg", "n", "seed", "out", "render", "crop", "scale_min", "scale_max",
                                          "flip_probability"});
    const auto out = required_string(j, "out");
    const auto n = opt<std::size_t>(j, "n", 32);
    const auto seed = opt<std::uint64_t>(j, "seed", 0);
    const auto params = synth_params(j);
    const auto pool = AssetPool::load(asset_dir(j, "fg", "fg"), asset_dir(j, "bg", "bg"));
    const auto entries = generate_manifest(pool.foregrounds(), pool.backgrounds(), n, seed, params);
    write_manifest(entries, out);
    json summary = {{"samples", entries.size()}, {"manifest", out}, {"seed", seed}};
    if (j.contains("render")) {
      const auto dir = j["render"].get<std::string>();
      render_dataset(pool, entries, dir, params.crop);
      summary["rendered"] = dir;
    }
    if (summary_json_out) *summary_json_out = dup_string(summary.dump());
  });
}

cseg_status cseg_write_asset_pack(const char* dir, int fg_count, int bg_count, int size, uint64_t seed) {
  return guarded([&] {
    need(dir, "dir");
    require(fg_count > 0 && bg_count > 0 && size >= 16, ErrorCode::InvalidArgument,
            "asset pack needs positive counts and size >= 16");
    write_asset_pack(dir, fg_count, bg_count, size, seed);
  });
}

cseg_status cseg_train(const char* options_json, cseg_log_fn log_fn, void* user, char** summary_json_out) {
  return guarded([&] {
    const json j = options(options_json, {"manifest", "fg", "bg", "mode", "clicks", "epochs", "seed", "out", "lr",
                                          "milestones", "lr_factor", "crop", "augment", "resume", "log", "model",
                                          "model_seed"});
    const auto manifest = required_string(j, "manifest");
    const auto out = required_string(j, "out");
    TrainConfig cfg;
    cfg.mode = train_mode_from_string(opt<std::string>(j, "mode", "iterative"));
    cfg.clicks_per_image = opt(j, "clicks", cfg.clicks_per_image);
    cfg.epochs = opt(j, "epochs", cfg.epochs);
    cfg.seed = opt(j, "seed", cfg.seed);
    cfg.schedule.base = opt(j, "lr", cfg.schedule.base);
    cfg.schedule.milestones = opt(j, "milestones", cfg.schedule.milestones);
    cfg.schedule.factor = opt(j, "lr_factor", cfg.schedule.factor);
    cfg.crop = opt(j, "crop", cfg.crop);
    cfg.augment = opt(j, "augment", cfg.augment);
    require(cfg.schedule.base > 0, ErrorCode::InvalidArgument, "lr must be positive");

    const auto pool = AssetPool::load(asset_dir(j, "fg", "fg"), asset_dir(j, "bg", "bg"));
    const auto entries = read_manifest(manifest);
    std::vector<TrainSample> samples;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto s = pool.render(entries[i], cfg.crop);
      samples.push_back({sample_id(i), std::move(s.image), std::move(s.mask)});
    }

    std::unique_ptr<nn::MicroSegNet<float>> net;
    if (j.contains("resume")) {
      net = nn::load_checkpoint(j["resume"].get<std::string>());
    } else {
      const nn::NetConfig nc = j.contains("model") ? nn::NetConfig::from_json(j["model"].dump()) : nn::NetConfig{};
      net = std::make_unique<nn::MicroSegNet<float>>(nc, opt<std::uint64_t>(j, "model_seed", cfg.seed));
    }

    std::ofstream log;
    if (j.contains("log")) {
      const std::filesystem::path p = j["log"].get<std::string>();
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      log.open(p, std::ios::binary);
      require(log.good(), ErrorCode::Io, "cannot write " + p.string());
    }
    const auto result = train(*net, samples, cfg, [&](const TrainLogEntry& e) {
      const auto line = e.to_json(cfg.mode);
      if (log.is_open()) log << line << '\n';
      if (log_fn) log_fn(line.c_str(), user);
    });
    if (log.is_open()) {
      log.flush();
      require(log.good(), ErrorCode::Io, "log write failed");
    }
    nn::save_checkpoint(*net, out, {train_meta_json(cfg, samples.size())});

    double last = 0.0;
    if (!result.log.empty() && !result.log.back().losses.empty()) last = result.log.back().losses.back();
    json summary = {{"checkpoint", out}, {"steps", result.steps}, {"samples", samples.size()},
                    {"epochs", cfg.epochs}, {"final_loss", last}};
    if (summary_json_out) *summary_json_out = dup_string(summary.dump());
  });
}

cseg_status cseg_bench(const char* options_json, char** report_json_out) {
  return guarded([&] {
    const json j = options(options_json, {"dataset", "manifest", "fg", "bg", "ckpt", "external", "clicks",
                                          "thresholds", "guided", "seed", "workers", "method", "out", "csv", "crop"});
    ProtocolConfig cfg;
    cfg.max_clicks = opt(j, "clicks", cfg.max_clicks);
    cfg.thresholds = opt(j, "thresholds", cfg.thresholds);
    cfg.guided = opt(j, "guided", cfg.guided);
    cfg.seed = opt(j, "seed", cfg.seed);
    cfg.workers = opt(j, "workers", cfg.workers);
    cfg.method = opt<std::string>(j, "method", cfg.method);
    require(cfg.max_clicks >= 1, ErrorCode::InvalidArgument, "clicks must be >= 1");
    require(cfg.workers >= 1, ErrorCode::InvalidArgument, "workers must be >= 1");

    std::vector<BenchSample> data;
    if (j.contains("dataset")) {
      require(!j.contains("manifest"), ErrorCode::InvalidArgument, "give either dataset or manifest, not both");
      cfg.dataset = j["dataset"].get<std::string>();
      data = load_dataset(cfg.dataset);
    } else {
      cfg.dataset = required_string(j, "manifest");
      const auto pool = AssetPool::load(asset_dir(j, "fg", "fg"), asset_dir(j, "bg", "bg"));
      data = dataset_from_manifest(pool, read_manifest(cfg.dataset), opt(j, "crop", 96));
    }

    std::unique_ptr<Segmenter> model;
    if (j.contains("external")) {
      require(!j.contains("ckpt"), ErrorCode::InvalidArgument, "give either ckpt or external, not both");
      cfg.checkpoint = "external:" + j["external"].get<std::string>();
      model = std::make_unique<ExternalSegmenter>(j["external"].get<std::string>());
    } else {
      cfg.checkpoint = required_string(j, "ckpt");
      std::shared_ptr<const nn::MicroSegNet<float>> net = nn::load_checkpoint(cfg.checkpoint);
      nn::PredictOptions po;
      po.guided = cfg.guided;
      model = std::make_unique<NetSegmenter>(net, po);
    }

    const auto report = run_protocol(*model, data, cfg);
    const auto text = report_to_json(report);
    if (j.contains("out")) write_text(j["out"].get<std::string>(), text);
    if (j.contains("csv")) write_text(j["csv"].get<std::string>(), report_to_csv(report));
    if (report_json_out) *report_json_out = dup_string(text);
  });
}

cseg_status cseg_report_plot(const char* const* report_paths, size_t count, const char* out_svg_path) {
  return guarded([&] {
    need(out_svg_path, "out_svg_path");
    require(count > 0 && report_paths, ErrorCode::InvalidArgument, "at least one report is required");
    std::vector<BenchmarkReport> reports;
    for (size_t i = 0; i < count; ++i) {
      need(report_paths[i], "report path");
      reports.push_back(report_from_json(read_text(report_paths[i])));
    }
    write_text(out_svg_path, render_report_svg(reports));
  });
}

cseg_status cseg_server_start(const char* options_json, cseg_server** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    const json j = options(options_json, {"ckpt", "host", "port", "guided", "ui", "history_cap", "max_side",
                                          "inference_side"});
    std::shared_ptr<const nn::MicroSegNet<float>> net = nn::load_checkpoint(required_string(j, "ckpt"));
    SessionConfig sc;
    sc.guided = opt(j, "guided", sc.guided);
    sc.history_cap = opt(j, "history_cap", sc.history_cap);
    sc.max_side = opt(j, "max_side", sc.max_side);
    sc.inference_side = opt(j, "inference_side", sc.inference_side);
    require(sc.history_cap >= 1, ErrorCode::InvalidArgument, "history_cap must be >= 1");
    ServerOptions so;
    so.host = opt<std::string>(j, "host", so.host);
    so.port = opt(j, "port", so.port);
    if (j.contains("ui")) so.ui_dir = j["ui"].get<std::string>();
    require(so.port >= 0 && so.port <= 65535, ErrorCode::InvalidArgument, "port out of range");

    auto s = std::make_unique<cseg_server>();
    s->sessions = std::make_shared<SessionManager>(net, sc);
    s->server = std::make_unique<Server>(s->sessions, so);
    s->server->start();
    *out = s.release();
  });
}

int cseg_server_port(const cseg_server* server) { return server ? server->server->port() : -1; }

void cseg_server_stop(cseg_server* server) {
  if (!server) return;
  try {
    server->server->stop();
  } catch (...) {
  }
  delete server;
}

}  // extern "C"

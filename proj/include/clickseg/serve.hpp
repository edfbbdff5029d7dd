#pragma once

// Interactive annotation sessions and the HTTP/WebSocket service around them.
//
// Wire protocol
//   POST /session                 body: {"image": <base64 PNG>, "gt": <base64 PNG>?, "guided": bool?}
//                                 or a raw PNG body (Content-Type: image/png)
//                                 -> {"id": hex, "w": int, "h": int}
//   WS   /session/{id}            text frames, one JSON object each:
//                                   {"op":"click","x":int,"y":int,"pos":bool,"soft":bool?}
//                                   {"op":"undo","soft":bool?}  {"op":"reset"}
//                                 -> {"op", "mask_rle":[...], "w", "h", "iou": float|null, "ms": float,
//                                     "clicks": int, "soft_png": <base64 PNG>?}
//                                 errors -> {"error": message, "code": int}
//   GET  /session/{id}/export     -> {"mask_png": <base64 PNG>, "clicks": [...], "w", "h"}
//                                 (?format=png returns the PNG itself)
//   DELETE /session/{id}
//   GET  /health
//
// mask_rle: run lengths of the 0.5-binarized mask in row-major order,
// alternating background/foreground and starting with background (the first
// run may be 0).

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "clickseg/clicks.hpp"
#include "clickseg/guided.hpp"
#include "clickseg/image.hpp"
#include "clickseg/net.hpp"

namespace clickseg {

struct SessionConfig {
  int max_side = 2048;       // larger uploads are rejected
  std::size_t history_cap = 64;  // stored predictions; older ones are evicted
  // Images whose longer side exceeds this run through the model at reduced
  // size; the prediction is upsampled (and guided-filtered, if enabled) at
  // full resolution.
  int inference_side = 256;
  bool guided = true;
  GuidedFilterParams guided_params{};
};

struct MaskUpdate {
  std::vector<std::uint32_t> rle;
  int width = 0;
  int height = 0;
  std::optional<double> iou;
  double ms = 0.0;
  std::size_t clicks = 0;
  SoftMask soft;
};

struct SessionExport {
  std::vector<std::uint8_t> mask_png;
  std::string clicks_json;
  int width = 0;
  int height = 0;
};

std::vector<std::uint32_t> encode_rle(const BinaryMask& mask);
BinaryMask decode_rle(std::span<const std::uint32_t> rle, int height, int width);

class SessionManager {
 public:
  SessionManager(std::shared_ptr<const nn::MicroSegNet<float>> model, SessionConfig config = {});

  // Returns a fresh 128-bit hex id.
  std::string open(std::span<const std::uint8_t> image_png, std::optional<std::span<const std::uint8_t>> gt_png = {},
                   std::optional<bool> guided = {});
  std::string open(Image image, std::optional<BinaryMask> gt = {}, std::optional<bool> guided = {});

  MaskUpdate click(const std::string& id, int x, int y, bool positive);
  MaskUpdate undo(const std::string& id);
  MaskUpdate reset(const std::string& id);
  SessionExport export_session(const std::string& id);
  bool close(const std::string& id);
  std::size_t size() const;
  std::pair<int, int> dimensions(const std::string& id);

  // Prediction for a click sequence on an image, as a session would compute
  // it (exposed for tests and the CLI refine command).
  SoftMask infer(const Image& image, const std::vector<Click>& clicks, const SoftMask& prev, bool guided);

 private:
  struct Session {
    std::mutex mutex;
    Image image;
    std::optional<BinaryMask> gt;
    bool guided = true;
    std::vector<Click> clicks;
    std::deque<SoftMask> predictions;  // predictions.back() belongs to clicks.back()
    std::chrono::system_clock::time_point created;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  MaskUpdate describe(const Session& s, double ms) const;

  std::shared_ptr<const nn::MicroSegNet<float>> model_;
  SessionConfig config_;
  std::mutex model_mutex_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

std::string mask_update_json(const MaskUpdate& u, const std::string& op, bool include_soft);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8008;  // 0 picks a free port
  std::filesystem::path ui_dir;  // static files; empty disables
  std::size_t body_limit = 64u << 20;
};

class Server {
 public:
  Server(std::shared_ptr<SessionManager> sessions, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void start();
  void stop();
  int port() const noexcept { return bound_port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int bound_port_ = 0;
};

}  // namespace clickseg

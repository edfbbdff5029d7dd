#include "clickseg/serve.hpp"

#include <algorithm>
#include <condition_variable>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "clickseg/metrics.hpp"

namespace clickseg {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(beast::detail::base64::encoded_size(bytes.size()), '\0');
  out.resize(beast::detail::base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  // The decoder stops at padding, so it is checked separately.
  std::size_t body = text.size();
  while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
  require(body == text.size() || text.size() % 4 == 0, ErrorCode::Format, "invalid base64 padding");
  std::vector<std::uint8_t> out(beast::detail::base64::decoded_size(text.size()));
  const auto [written, read] = beast::detail::base64::decode(out.data(), text.data(), body);
  require(read == body, ErrorCode::Format, "invalid base64 payload");
  out.resize(written);
  return out;
}

std::string random_id() {
  std::random_device rd;
  std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

}  // namespace

std::vector<std::uint32_t> encode_rle(const BinaryMask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint8_t v = mask[i] ? 1 : 0;
    if (v != current) {
      runs.push_back(length);
      current = v;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

BinaryMask decode_rle(std::span<const std::uint32_t> rle, int height, int width) {
  BinaryMask out(height, width);
  std::size_t pos = 0;
  std::uint8_t v = 0;
  for (std::uint32_t run : rle) {
    require(pos + run <= out.size(), ErrorCode::Format, "run lengths exceed the mask size");
    std::fill_n(out.vec().begin() + static_cast<std::ptrdiff_t>(pos), run, v);
    pos += run;
    v ^= 1;
  }
  require(pos == out.size(), ErrorCode::Format, "run lengths do not cover the mask");
  return out;
}

SessionManager::SessionManager(std::shared_ptr<const nn::MicroSegNet<float>> model, SessionConfig config)
    : model_(std::move(model)), config_(config) {
  require(model_ != nullptr, ErrorCode::InvalidArgument, "session manager needs a model");
  require(config_.history_cap >= 1, ErrorCode::InvalidArgument, "history cap must be >= 1");
  require(config_.inference_side >= 8, ErrorCode::InvalidArgument, "inference side must be >= 8");
}

std::string SessionManager::open(std::span<const std::uint8_t> image_png,
                                 std::optional<std::span<const std::uint8_t>> gt_png, std::optional<bool> guided) {
  const RasterFile raster = decode_png(image_png);
  require(raster.height <= config_.max_side && raster.width <= config_.max_side, ErrorCode::InvalidArgument,
          "image exceeds the " + std::to_string(config_.max_side) + " pixel size limit");
  Image image = image_from_raster(raster);
  std::optional<BinaryMask> gt;
  if (gt_png) gt = binarize(soft_mask_from_raster(decode_png(*gt_png)), 0.5);
  return open(std::move(image), std::move(gt), guided);
}

std::string SessionManager::open(Image image, std::optional<BinaryMask> gt, std::optional<bool> guided) {
  require(image.height() > 0 && image.width() > 0, ErrorCode::InvalidArgument, "empty image");
  require(image.height() <= config_.max_side && image.width() <= config_.max_side, ErrorCode::InvalidArgument,
          "image exceeds the " + std::to_string(config_.max_side) + " pixel size limit");
  if (gt)
    require(gt->same_shape(image), ErrorCode::Shape,
            "ground truth is " + std::to_string(gt->width()) + "x" + std::to_string(gt->height()) +
                " but the image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
  auto s = std::make_shared<Session>();
  s->image = std::move(image);
  s->gt = std::move(gt);
  s->guided = guided.value_or(config_.guided);
  s->created = std::chrono::system_clock::now();
  std::lock_guard lock(sessions_mutex_);
  std::string id;
  do {
    id = random_id();
  } while (sessions_.count(id));
  sessions_.emplace(id, std::move(s));
  return id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::NotFound, "unknown session '" + id + "'");
  return it->second;
}

SoftMask SessionManager::infer(const Image& image, const std::vector<Click>& clicks, const SoftMask& prev,
                               bool guided) {
  const int h = image.height();
  const int w = image.width();
  const int side = std::max(h, w);
  nn::PredictOptions options;
  options.guided = guided;
  options.guided_params = config_.guided_params;
  if (side <= config_.inference_side) {
    std::lock_guard lock(model_mutex_);
    return nn::predict(*model_, image, clicks, prev, options);
  }
  const double scale = static_cast<double>(config_.inference_side) / side;
  const int sh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int sw = std::max(1, static_cast<int>(std::lround(w * scale)));
  std::vector<Click> small_clicks = clicks;
  for (auto& c : small_clicks) {
    c.x = std::clamp(static_cast<int>((c.x + 0.5) * sw / w), 0, sw - 1);
    c.y = std::clamp(static_cast<int>((c.y + 0.5) * sh / h), 0, sh - 1);
  }
  SoftMask small;
  {
    std::lock_guard lock(model_mutex_);
    small = nn::predict(*model_, resize_bilinear(image, sh, sw), small_clicks, resize_bilinear(prev, sh, sw));
  }
  SoftMask full = resize_bilinear(small, h, w);
  if (guided) full = guided_filter(image, full, config_.guided_params);
  return full;
}

MaskUpdate SessionManager::describe(const Session& s, double ms) const {
  MaskUpdate u;
  u.height = s.image.height();
  u.width = s.image.width();
  u.soft = s.predictions.empty() ? SoftMask(u.height, u.width, 0.0f) : s.predictions.back();
  const BinaryMask mask = binarize(u.soft, 0.5);
  u.rle = encode_rle(mask);
  if (s.gt) u.iou = iou(mask, *s.gt);
  u.ms = ms;
  u.clicks = s.clicks.size();
  return u;
}

MaskUpdate SessionManager::click(const std::string& id, int x, int y, bool positive) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  require(x >= 0 && y >= 0 && x < s->image.width() && y < s->image.height(), ErrorCode::InvalidArgument,
          "click (" + std::to_string(x) + ", " + std::to_string(y) + ") is outside the image");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Click> clicks = s->clicks;
  clicks.push_back({x, y, positive, static_cast<int>(clicks.size()) + 1});
  const SoftMask prev =
      s->predictions.empty() ? SoftMask(s->image.height(), s->image.width(), 0.0f) : s->predictions.back();
  SoftMask pred = infer(s->image, clicks, prev, s->guided);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  s->clicks = std::move(clicks);
  s->predictions.push_back(std::move(pred));
  while (s->predictions.size() > config_.history_cap) s->predictions.pop_front();
  return describe(*s, ms);
}

MaskUpdate SessionManager::undo(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  require(!s->clicks.empty(), ErrorCode::State, "nothing to undo");
  require(s->clicks.size() == 1 || s->predictions.size() >= 2, ErrorCode::State,
          "undo history exhausted (older states were evicted)");
  s->clicks.pop_back();
  s->predictions.pop_back();
  return describe(*s, 0.0);
}

MaskUpdate SessionManager::reset(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  s->clicks.clear();
  s->predictions.clear();
  return describe(*s, 0.0);
}

SessionExport SessionManager::export_session(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  const MaskUpdate u = describe(*s, 0.0);
  return {encode_mask_png(binarize(u.soft, 0.5)), clicks_to_json(s->clicks), u.width, u.height};
}

bool SessionManager::close(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.erase(id) > 0;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::pair<int, int> SessionManager::dimensions(const std::string& id) {
  auto s = find(id);
  return {s->image.height(), s->image.width()};
}

std::string mask_update_json(const MaskUpdate& u, const std::string& op, bool include_soft) {
  ordered_json j;
  j["op"] = op;
  j["mask_rle"] = u.rle;
  j["w"] = u.width;
  j["h"] = u.height;
  j["iou"] = u.iou ? ordered_json(*u.iou) : ordered_json(nullptr);
  j["ms"] = u.ms;
  j["clicks"] = u.clicks;
  if (include_soft) j["soft_png"] = base64_encode(encode_mask_png(u.soft));
  return j.dump();
}

// ---------------------------------------------------------------------------
// Network front end

namespace {

std::string error_json(const std::string& message, int code) {
  return json{{"error", message}, {"code", code}}.dump();
}

http::status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return http::status::not_found;
    case ErrorCode::InvalidArgument:
    case ErrorCode::Format:
    case ErrorCode::Shape: return http::status::bad_request;
    case ErrorCode::State: return http::status::conflict;
    default: return http::status::internal_server_error;
  }
}

std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    const std::size_t j = path.find('/', i);
    const std::string part = path.substr(i, j == std::string::npos ? std::string::npos : j - i);
    if (!part.empty()) parts.push_back(part);
    if (j == std::string::npos) break;
    i = j + 1;
  }
  return parts;
}

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response make_response(const Request& req, http::status status, std::string body, const std::string& type) {
  Response res{status, req.version()};
  res.set(http::field::content_type, type);
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

}  // namespace

struct Server::Impl {
  std::shared_ptr<SessionManager> sessions;
  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread accept_thread;
  std::mutex mu;
  std::condition_variable idle;
  std::set<int> live;
  int active = 0;
  bool stopping = false;

  Response route(const Request& req);
  Response serve_static(const Request& req, const std::string& path);
  void run_websocket(tcp::socket& socket, const Request& req, const std::string& id);
  void handle(tcp::socket socket);
  void accept_loop();
};

Response Server::Impl::route(const Request& req) {
  const std::string target(req.target());
  const std::size_t q = target.find('?');
  const std::string path = target.substr(0, q);
  const std::string query = q == std::string::npos ? "" : target.substr(q + 1);
  const auto parts = split_path(path);
  try {
    if (req.method() == http::verb::options)
      return [&] {
        auto r = make_response(req, http::status::no_content, "", "text/plain");
        r.set(http::field::access_control_allow_methods, "GET, POST, DELETE, OPTIONS");
        r.set(http::field::access_control_allow_headers, "Content-Type");
        return r;
      }();
    if (parts.size() == 1 && parts[0] == "health" && req.method() == http::verb::get)
      return make_response(req, http::status::ok, json{{"ok", true}, {"sessions", sessions->size()}}.dump(),
                           "application/json");
    if (parts.size() == 1 && parts[0] == "session" && req.method() == http::verb::post) {
      std::string id;
      const auto type = std::string(req[http::field::content_type]);
      if (type.rfind("image/png", 0) == 0) {
        const auto& b = req.body();
        id = sessions->open(std::span(reinterpret_cast<const std::uint8_t*>(b.data()), b.size()));
      } else {
        json body;
        try {
          body = json::parse(req.body());
        } catch (const json::exception& e) {
          fail(ErrorCode::Format, std::string("request body is not JSON: ") + e.what());
        }
        require(body.contains("image") && body["image"].is_string(), ErrorCode::InvalidArgument,
                "missing \"image\" (base64 PNG)");
        const auto image = base64_decode(body["image"].get<std::string>());
        std::optional<std::vector<std::uint8_t>> gt;
        if (body.contains("gt") && !body["gt"].is_null()) gt = base64_decode(body["gt"].get<std::string>());
        std::optional<bool> guided;
        if (body.contains("guided")) guided = body["guided"].get<bool>();
        id = gt ? sessions->open(image, std::span<const std::uint8_t>(*gt), guided)
                : sessions->open(image, std::nullopt, guided);
      }
      const auto [h, w] = sessions->dimensions(id);
      return make_response(req, http::status::created, json{{"id", id}, {"w", w}, {"h", h}}.dump(),
                           "application/json");
    }
    if (parts.size() == 3 && parts[0] == "session" && parts[2] == "export" && req.method() == http::verb::get) {
      const auto ex = sessions->export_session(parts[1]);
      if (query.find("format=png") != std::string::npos)
        return make_response(req, http::status::ok, std::string(ex.mask_png.begin(), ex.mask_png.end()),
                             "image/png");
      ordered_json j;
      j["mask_png"] = base64_encode(ex.mask_png);
      j["clicks"] = json::parse(ex.clicks_json);
      j["w"] = ex.width;
      j["h"] = ex.height;
      return make_response(req, http::status::ok, j.dump(), "application/json");
    }
    if (parts.size() == 2 && parts[0] == "session" && req.method() == http::verb::delete_) {
      if (!sessions->close(parts[1])) fail(ErrorCode::NotFound, "unknown session '" + parts[1] + "'");
      return make_response(req, http::status::ok, json{{"closed", parts[1]}}.dump(), "application/json");
    }
    if (req.method() == http::verb::get && !options.ui_dir.empty()) return serve_static(req, path);
    return make_response(req, http::status::not_found, error_json("no route for " + path, 0), "application/json");
  } catch (const Error& e) {
    return make_response(req, status_for(e.code()), error_json(e.what(), static_cast<int>(e.code())),
                         "application/json");
  } catch (const std::exception& e) {
    return make_response(req, http::status::internal_server_error,
                         error_json(e.what(), static_cast<int>(ErrorCode::Internal)), "application/json");
  }
}

Response Server::Impl::serve_static(const Request& req, const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path root = fs::weakly_canonical(options.ui_dir);
  fs::path file = fs::weakly_canonical(root / (path == "/" ? std::string("index.html") : path.substr(1)));
  const auto rel = file.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..")
    return make_response(req, http::status::forbidden, error_json("outside the UI directory", 0),
                         "application/json");
  if (fs::is_directory(file)) file /= "index.html";
  std::ifstream in(file, std::ios::binary);
  if (!in)
    return make_response(req, http::status::not_found, error_json("no such file", 0), "application/json");
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return make_response(req, http::status::ok, std::move(body), mime_type(file));
}

void Server::Impl::run_websocket(tcp::socket& socket, const Request& req, const std::string& id) {
  websocket::stream<tcp::socket&> ws(socket);
  ws.read_message_max(1u << 20);
  ws.accept(req);
  for (;;) {
    beast::flat_buffer buffer;
    beast::error_code ec;
    ws.read(buffer, ec);
    if (ec) return;
    std::string reply;
    try {
      json msg;
      try {
        msg = json::parse(beast::buffers_to_string(buffer.data()));
      } catch (const json::exception& e) {
        fail(ErrorCode::Format, std::string("message is not JSON: ") + e.what());
      }
      const std::string op = msg.value("op", std::string());
      const bool soft = msg.value("soft", false);
      MaskUpdate u;
      if (op == "click") {
        require(msg.contains("x") && msg.contains("y") && msg.contains("pos"), ErrorCode::InvalidArgument,
                "click needs x, y and pos");
        u = sessions->click(id, msg["x"].get<int>(), msg["y"].get<int>(), msg["pos"].get<bool>());
      } else if (op == "undo") {
        u = sessions->undo(id);
      } else if (op == "reset") {
        u = sessions->reset(id);
      } else {
        fail(ErrorCode::InvalidArgument, "unknown op '" + op + "'");
      }
      reply = mask_update_json(u, op, soft);
    } catch (const Error& e) {
      reply = error_json(e.what(), static_cast<int>(e.code()));
    } catch (const std::exception& e) {
      reply = error_json(e.what(), static_cast<int>(ErrorCode::Internal));
    }
    ws.text(true);
    ws.write(asio::buffer(reply), ec);
    if (ec) return;
  }
}

void Server::Impl::handle(tcp::socket socket) {
  beast::flat_buffer buffer;
  beast::error_code ec;
  for (;;) {
    http::request_parser<http::string_body> parser;
    parser.body_limit(options.body_limit);
    http::read(socket, buffer, parser, ec);
    if (ec) break;
    Request req = parser.release();
    if (websocket::is_upgrade(req)) {
      const auto parts = split_path(std::string(req.target()).substr(0, std::string(req.target()).find('?')));
      if (parts.size() == 2 && parts[0] == "session") {
        try {
          // Reject unknown ids before upgrading.
          sessions->dimensions(parts[1]);
        } catch (const Error& e) {
          http::write(socket, make_response(req, status_for(e.code()),
                                            error_json(e.what(), static_cast<int>(e.code())), "application/json"),
                      ec);
          break;
        }
        try {
          run_websocket(socket, req, parts[1]);
        } catch (const std::exception&) {
        }
        break;
      }
    }
    Response res = route(req);
    const bool keep = res.keep_alive();
    http::write(socket, res, ec);
    if (ec || !keep) break;
  }
  socket.shutdown(tcp::socket::shutdown_both, ec);
}

void Server::Impl::accept_loop() {
  for (;;) {
    tcp::socket socket(ioc);
    beast::error_code ec;
    acceptor.accept(socket, ec);
    std::unique_lock lock(mu);
    if (stopping) break;
    if (ec) continue;
    const int fd = socket.native_handle();
    live.insert(fd);
    ++active;
    lock.unlock();
    std::thread([this, fd, s = std::make_unique<tcp::socket>(std::move(socket))]() mutable {
      handle(std::move(*s));
      s.reset();
      std::lock_guard guard(mu);
      live.erase(fd);
      if (--active == 0) idle.notify_all();
    }).detach();
  }
}

Server::Server(std::shared_ptr<SessionManager> sessions, ServerOptions options) : impl_(std::make_unique<Impl>()) {
  require(sessions != nullptr, ErrorCode::InvalidArgument, "server needs a session manager");
  impl_->sessions = std::move(sessions);
  impl_->options = std::move(options);
}

Server::~Server() { stop(); }

void Server::start() {
  require(!impl_->accept_thread.joinable(), ErrorCode::State, "server already started");
  beast::error_code ec;
  const auto address = asio::ip::make_address(impl_->options.host, ec);
  require(!ec, ErrorCode::InvalidArgument, "bad listen address '" + impl_->options.host + "'");
  const tcp::endpoint endpoint(address, static_cast<unsigned short>(impl_->options.port));
  auto& acceptor = impl_->acceptor;
  acceptor.open(endpoint.protocol(), ec);
  if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acceptor.bind(endpoint, ec);
  if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) fail(ErrorCode::Io, "cannot listen on " + impl_->options.host + ":" +
                                  std::to_string(impl_->options.port) + ": " + ec.message());
  bound_port_ = acceptor.local_endpoint().port();
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

void Server::stop() {
  if (!impl_ || !impl_->accept_thread.joinable()) return;
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
    // shutdown() wakes threads blocked in accept()/read() on these sockets.
    ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
    for (int fd : impl_->live) ::shutdown(fd, SHUT_RDWR);
  }
  impl_->accept_thread.join();
  beast::error_code ec;
  impl_->acceptor.close(ec);
  std::unique_lock lock(impl_->mu);
  impl_->idle.wait(lock, [&] { return impl_->active == 0; });
}

}  // namespace clickseg

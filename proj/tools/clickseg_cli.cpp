// clickseg command-line tool. Links only the C API.
//
// Exit status: 0 on success, 1 when the library reports an error, 2 on a
// usage error. Failures print one JSON object on stderr:
//   {"error": message, "status": name, "code": int}

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clickseg/clickseg.h"

using json = nlohmann::json;

namespace {

struct Failure {
  cseg_status status;
  std::string message;
};

void check(cseg_status s) {
  if (s != CSEG_OK) throw Failure{s, cseg_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  cseg_string_free(s);
  return out;
}

void print_error(const std::string& message, const std::string& status, int code) {
  std::cerr << json{{"error", message}, {"status", status}, {"code", code}}.dump() << std::endl;
}

// "@path" reads the argument from a file.
std::string inline_or_file(const std::string& arg) {
  if (arg.empty() || arg[0] != '@') return arg;
  std::ifstream f(arg.substr(1), std::ios::binary);
  if (!f) throw Failure{CSEG_ERR_IO, "cannot read " + arg.substr(1)};
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clickseg: click-based interactive segmentation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cseg_version()));

  // bench
  auto* bench = app.add_subcommand("bench", "Run the simulated click protocol and write a report");
  std::string b_dataset, b_manifest, b_fg, b_bg, b_ckpt, b_external, b_method = "clickseg", b_out, b_csv;
  int b_clicks = 20, b_workers = 1;
  std::uint64_t b_seed = 0;
  bool b_guided = false;
  std::vector<double> b_thresholds;
  auto* b_ds_opt = bench->add_option("--dataset", b_dataset, "Directory with images/ and masks/");
  bench->add_option("--manifest", b_manifest, "Composite manifest (JSON lines) instead of a dataset directory")
      ->excludes(b_ds_opt);
  bench->add_option("--fg", b_fg, "Foreground asset directory (manifest input; default: bundled)");
  bench->add_option("--bg", b_bg, "Background asset directory (manifest input; default: bundled)");
  auto* b_ckpt_opt = bench->add_option("--ckpt", b_ckpt, "Model checkpoint");
  bench->add_option("--external", b_external, "Command of an external JSON-lines segmenter")->excludes(b_ckpt_opt);
  bench->add_option("--clicks", b_clicks, "Clicks per image")->check(CLI::PositiveNumber);
  bench->add_option("--thresholds", b_thresholds, "IoU thresholds for NoC");
  bench->add_option("--seed", b_seed, "Seed recorded in the report");
  bench->add_option("--workers", b_workers, "Worker threads")->check(CLI::PositiveNumber);
  bench->add_option("--method", b_method, "Method label");
  bench->add_option("--out", b_out, "Report JSON path")->required();
  bench->add_option("--csv", b_csv, "Per-image curve CSV path");
  bench->add_flag("--guided", b_guided, "Apply the guided filter to predictions");

  // train
  auto* trn = app.add_subcommand("train", "Train a model on a composite manifest");
  std::string t_manifest, t_fg, t_bg, t_mode = "iterative", t_out, t_resume, t_log, t_model;
  int t_clicks = 4, t_epochs = 25, t_crop = 96;
  std::uint64_t t_seed = 7;
  double t_lr = 1e-3;
  std::vector<int> t_milestones;
  bool t_no_augment = false;
  trn->add_option("--manifest", t_manifest, "Training manifest")->required();
  trn->add_option("--fg", t_fg, "Foreground asset directory (default: bundled)");
  trn->add_option("--bg", t_bg, "Background asset directory (default: bundled)");
  trn->add_option("--mode", t_mode, "iterative or bundled")->check(CLI::IsMember({"iterative", "bundled"}));
  trn->add_option("--clicks", t_clicks, "Clicks per image (iterative mode)")->check(CLI::PositiveNumber);
  trn->add_option("--epochs", t_epochs, "Epochs")->check(CLI::NonNegativeNumber);
  trn->add_option("--seed", t_seed, "Seed for initialization, shuffling and augmentation");
  trn->add_option("--lr", t_lr, "Base learning rate");
  trn->add_option("--milestones", t_milestones, "Epochs at which the learning rate drops 10x");
  trn->add_option("--crop", t_crop, "Training crop size (multiple of 8)");
  trn->add_flag("--no-augment", t_no_augment, "Disable flips, gamma and brightness jitter");
  trn->add_option("--resume", t_resume, "Start from this checkpoint");
  trn->add_option("--model", t_model, "Model config JSON (inline or @file)");
  trn->add_option("--log", t_log, "JSONL training log path");
  trn->add_option("--out", t_out, "Checkpoint path")->required();

  // synthgen
  auto* syn = app.add_subcommand("synthgen", "Write a composite manifest (and optionally render it)");
  std::string s_fg, s_bg, s_out, s_render, s_pack;
  std::size_t s_n = 32;
  std::uint64_t s_seed = 0;
  int s_crop = 96, s_pack_fg = 36, s_pack_bg = 36, s_pack_size = 128;
  syn->add_option("--fg", s_fg, "Foreground asset directory (default: bundled)");
  syn->add_option("--bg", s_bg, "Background asset directory (default: bundled)");
  syn->add_option("-n,--n", s_n, "Number of composites");
  syn->add_option("--seed", s_seed, "Manifest seed");
  syn->add_option("--crop", s_crop, "Composite size");
  syn->add_option("--out", s_out, "Manifest path");
  syn->add_option("--render", s_render, "Also render images/, masks/ and alphas/ here");
  syn->add_option("--asset-pack", s_pack, "Instead write a procedural asset pack (fg/, bg/) to this directory");
  syn->add_option("--pack-fg", s_pack_fg, "Foregrounds in the asset pack");
  syn->add_option("--pack-bg", s_pack_bg, "Backgrounds in the asset pack");
  syn->add_option("--pack-size", s_pack_size, "Asset size in pixels");

  // refine
  auto* ref = app.add_subcommand("refine",
                                 "Guided-filter a mask (--in, --guide), or predict one with a model (--ckpt, --image, "
                                 "--clicks)");
  std::string r_in, r_guide, r_ckpt, r_image, r_clicks, r_prev, r_out;
  int r_radius = 2;
  double r_eps = 1e-4;
  bool r_guided = false;
  auto* r_in_opt = ref->add_option("--in", r_in, "Mask PNG to refine");
  auto* r_guide_opt = ref->add_option("--guide", r_guide, "Guide image");
  auto* r_ckpt_opt = ref->add_option("--ckpt", r_ckpt, "Model checkpoint");
  auto* r_image_opt = ref->add_option("--image", r_image, "Input image for the model");
  auto* r_clicks_opt =
      ref->add_option("--clicks", r_clicks, R"(Click list JSON [{"x","y","pos"}...] (inline or @file))");
  ref->add_option("--prev", r_prev, "Previous mask PNG (model mode)");
  ref->add_flag("--guided", r_guided, "Guided-filter the model output");
  ref->add_option("--r", r_radius, "Guided filter radius")->check(CLI::PositiveNumber);
  ref->add_option("--eps", r_eps, "Guided filter regularizer")->check(CLI::PositiveNumber);
  ref->add_option("--out", r_out, "Output mask PNG")->required();
  r_in_opt->needs(r_guide_opt)->excludes(r_ckpt_opt);
  r_ckpt_opt->needs(r_image_opt)->needs(r_clicks_opt);

  // simulate-clicks
  auto* sim = app.add_subcommand("simulate-clicks", "Next simulated click for a prediction and ground truth");
  std::string c_pred, c_gt;
  int c_k = 1;
  sim->add_option("--pred", c_pred, "Prediction PNG (scored at 0.5)")->required();
  sim->add_option("--gt", c_gt, "Ground-truth mask PNG")->required();
  sim->add_option("--k", c_k, "Ordinal of the click")->check(CLI::PositiveNumber);

  // serve
  auto* srv = app.add_subcommand("serve", "Serve interactive sessions over HTTP and WebSocket");
  std::string v_ckpt, v_host = "127.0.0.1", v_ui;
  int v_port = 8008, v_history = 64, v_side = 256;
  std::string v_guided = "on";
  srv->add_option("--ckpt", v_ckpt, "Model checkpoint")->required();
  srv->add_option("--host", v_host, "Bind address");
  srv->add_option("--port", v_port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  srv->add_option("--ui", v_ui, "Directory of static UI files");
  srv->add_option("--history", v_history, "Predictions kept per session for undo")->check(CLI::PositiveNumber);
  srv->add_option("--inference-side", v_side, "Longer side used for model inference")->check(CLI::PositiveNumber);
  srv->add_option("--guided", v_guided, "Guided filter on model output (on|off)")
      ->check(CLI::IsMember({"on", "off"}));

  // report-plot
  auto* plot = app.add_subcommand("report-plot", "Plot mean IoU curves of one or more reports as SVG");
  std::vector<std::string> p_reports;
  std::string p_out;
  plot->add_option("reports", p_reports, "Report JSON files")->required();
  plot->add_option("--out", p_out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(e.what(), "usage", e.get_exit_code());
    return 2;
  }

  try {
    if (*bench) {
      json o{{"clicks", b_clicks}, {"seed", b_seed}, {"workers", b_workers}, {"method", b_method},
             {"guided", b_guided}, {"out", b_out}};
      if (!b_dataset.empty()) o["dataset"] = b_dataset;
      if (!b_manifest.empty()) o["manifest"] = b_manifest;
      if (!b_fg.empty()) o["fg"] = b_fg;
      if (!b_bg.empty()) o["bg"] = b_bg;
      if (!b_ckpt.empty()) o["ckpt"] = b_ckpt;
      if (!b_external.empty()) o["external"] = b_external;
      if (!b_thresholds.empty()) o["thresholds"] = b_thresholds;
      if (!b_csv.empty()) o["csv"] = b_csv;
      char* report = nullptr;
      check(cseg_bench(o.dump().c_str(), &report));
      const json r = json::parse(take(report));
      json summary{{"report", b_out}, {"images", r["images"].size()}, {"auc", r["auc"]}, {"noc", r["noc"]},
                   {"iou_at_max", r["mean_curve"].empty() ? json(nullptr) : r["mean_curve"].back()}};
      std::cout << summary.dump() << std::endl;
    } else if (*trn) {
      json o{{"manifest", t_manifest}, {"mode", t_mode}, {"clicks", t_clicks}, {"epochs", t_epochs},
             {"seed", t_seed}, {"lr", t_lr}, {"crop", t_crop}, {"augment", !t_no_augment}, {"out", t_out}};
      if (!t_fg.empty()) o["fg"] = t_fg;
      if (!t_bg.empty()) o["bg"] = t_bg;
      if (!t_milestones.empty()) o["milestones"] = t_milestones;
      if (!t_resume.empty()) o["resume"] = t_resume;
      if (!t_log.empty()) o["log"] = t_log;
      if (!t_model.empty()) o["model"] = json::parse(inline_or_file(t_model));
      char* summary = nullptr;
      check(cseg_train(o.dump().c_str(), nullptr, nullptr, &summary));
      std::cout << take(summary) << std::endl;
    } else if (*syn) {
      if (!s_pack.empty()) {
        check(cseg_write_asset_pack(s_pack.c_str(), s_pack_fg, s_pack_bg, s_pack_size, s_seed));
        std::cout << json{{"asset_pack", s_pack}, {"fg", s_pack_fg}, {"bg", s_pack_bg}}.dump() << std::endl;
      } else {
        if (s_out.empty()) throw CLI::RequiredError("--out");
        json o{{"n", s_n}, {"seed", s_seed}, {"crop", s_crop}, {"out", s_out}};
        if (!s_fg.empty()) o["fg"] = s_fg;
        if (!s_bg.empty()) o["bg"] = s_bg;
        if (!s_render.empty()) o["render"] = s_render;
        char* summary = nullptr;
        check(cseg_synthgen(o.dump().c_str(), &summary));
        std::cout << take(summary) << std::endl;
      }
    } else if (*ref) {
      if (!r_ckpt.empty()) {
        cseg_model* model = nullptr;
        check(cseg_model_load(r_ckpt.c_str(), &model));
        const std::string clicks = inline_or_file(r_clicks);
        const cseg_status s = cseg_refine(model, r_image.c_str(), clicks.c_str(),
                                          r_prev.empty() ? nullptr : r_prev.c_str(), r_guided ? 1 : 0, r_radius,
                                          r_eps, r_out.c_str());
        cseg_model_free(model);
        check(s);
      } else {
        if (r_in.empty()) throw CLI::RequiredError("--in/--guide or --ckpt/--image/--clicks");
        check(cseg_guided_filter_files(r_in.c_str(), r_guide.c_str(), r_radius, r_eps, r_out.c_str()));
      }
      std::cout << json{{"mask", r_out}}.dump() << std::endl;
    } else if (*sim) {
      char* click = nullptr;
      check(cseg_simulate_click_files(c_pred.c_str(), c_gt.c_str(), c_k, &click));
      std::cout << take(click) << std::endl;
    } else if (*srv) {
      json o{{"ckpt", v_ckpt}, {"host", v_host}, {"port", v_port}, {"guided", v_guided == "on"},
             {"history_cap", v_history}, {"inference_side", v_side}};
      if (!v_ui.empty()) o["ui"] = v_ui;
      cseg_server* server = nullptr;
      check(cseg_server_start(o.dump().c_str(), &server));
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << json{{"listening", v_host}, {"port", cseg_server_port(server)}}.dump() << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      cseg_server_stop(server);
    } else if (*plot) {
      std::vector<const char*> paths;
      for (const auto& p : p_reports) paths.push_back(p.c_str());
      check(cseg_report_plot(paths.data(), paths.size(), p_out.c_str()));
      std::cout << json{{"svg", p_out}}.dump() << std::endl;
    }
  } catch (const Failure& f) {
    print_error(f.message, cseg_status_name(f.status), static_cast<int>(f.status));
    return 1;
  } catch (const CLI::ParseError& e) {
    print_error(e.what(), "usage", e.get_exit_code());
    return 2;
  } catch (const json::exception& e) {
    print_error(e.what(), "invalid_argument", CSEG_ERR_INVALID_ARGUMENT);
    return 1;
  }
  return 0;
}

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <nlohmann/json.hpp>

#include "clickseg/clickseg.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("clickseg_test_capi_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json take(char* s) {
  EXPECT_NE(s, nullptr);
  const json j = json::parse(s);
  cseg_string_free(s);
  return j;
}

const char* kTinyModel = R"({"width_div":16})";

}  // namespace

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(cseg_status_name(CSEG_OK), "ok");
  EXPECT_STRNE(cseg_status_name(CSEG_ERR_NOT_FOUND), cseg_status_name(CSEG_ERR_IO));
  EXPECT_GT(std::strlen(cseg_version()), 0u);
  EXPECT_TRUE(fs::is_directory(fs::path(cseg_default_asset_dir()) / "fg"));
  cseg_string_free(nullptr);
}

TEST(CApi, ErrorsSetLastError) {
  cseg_model* m = nullptr;
  EXPECT_EQ(cseg_model_load("/nonexistent/model.cseg", &m), CSEG_ERR_IO);
  EXPECT_EQ(m, nullptr);
  EXPECT_NE(std::string(cseg_last_error()).find("/nonexistent/model.cseg"), std::string::npos);
  EXPECT_EQ(cseg_model_create("{not json", 1, &m), CSEG_ERR_FORMAT);
  EXPECT_EQ(cseg_model_create(nullptr, 1, nullptr), CSEG_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(cseg_model_create(nullptr, 1, &m), CSEG_OK);
  EXPECT_STREQ(cseg_last_error(), "");
  cseg_model_free(m);
  cseg_model_free(nullptr);
  char* out = nullptr;
  EXPECT_EQ(cseg_synthgen(R"({"bogus": 1})", &out), CSEG_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(cseg_last_error()).find("bogus"), std::string::npos);
}

TEST(CApi, ModelSaveLoadInfo) {
  const auto dir = temp_dir("model");
  cseg_model* m = nullptr;
  ASSERT_EQ(cseg_model_create(kTinyModel, 5, &m), CSEG_OK);
  const std::string path = (dir / "m.cseg").string();
  ASSERT_EQ(cseg_model_save(m, path.c_str()), CSEG_OK);
  cseg_model* back = nullptr;
  ASSERT_EQ(cseg_model_load(path.c_str(), &back), CSEG_OK);
  char* a = nullptr;
  char* b = nullptr;
  ASSERT_EQ(cseg_model_info(m, &a), CSEG_OK);
  ASSERT_EQ(cseg_model_info(back, &b), CSEG_OK);
  const json ja = take(a), jb = take(b);
  EXPECT_EQ(ja["config"], jb["config"]);
  EXPECT_EQ(ja["config"]["width_div"], 16);
  EXPECT_GT(ja["parameters"].get<long>(), 0);
  cseg_model_free(m);
  cseg_model_free(back);
}

TEST(CApi, NextClick) {
  // A missed 3x3 block in the middle of a 7x7 image: the click lands at its
  // centre.
  std::vector<float> pred(49, 0.0f);
  std::vector<std::uint8_t> gt(49, 0);
  for (int y = 2; y <= 4; ++y)
    for (int x = 2; x <= 4; ++x) gt[y * 7 + x] = 1;
  int x = -1, y = -1, pos = -1;
  ASSERT_EQ(cseg_next_click(pred.data(), gt.data(), 7, 7, &x, &y, &pos), CSEG_OK);
  EXPECT_EQ(x, 3);
  EXPECT_EQ(y, 3);
  EXPECT_EQ(pos, 1);
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = gt[i];
  EXPECT_EQ(cseg_next_click(pred.data(), gt.data(), 7, 7, &x, &y, &pos), CSEG_ERR_ALREADY_CORRECT);
  EXPECT_EQ(cseg_next_click(pred.data(), gt.data(), 0, 7, &x, &y, &pos), CSEG_ERR_SHAPE);
  EXPECT_EQ(cseg_next_click(nullptr, gt.data(), 7, 7, &x, &y, &pos), CSEG_ERR_INVALID_ARGUMENT);
}

TEST(CApi, SynthTrainBenchPlotRefine) {
  const auto dir = temp_dir("pipeline");
  char* out = nullptr;
  const json syn{{"n", 2}, {"seed", 3}, {"out", (dir / "m.jsonl").string()}, {"render", (dir / "ds").string()}};
  ASSERT_EQ(cseg_synthgen(syn.dump().c_str(), &out), CSEG_OK) << cseg_last_error();
  EXPECT_EQ(take(out)["samples"], 2);
  EXPECT_TRUE(fs::exists(dir / "ds" / "images"));

  int lines = 0;
  const json trn{{"manifest", (dir / "m.jsonl").string()}, {"epochs", 1}, {"clicks", 2},
                 {"out", (dir / "m.cseg").string()}, {"model", json::parse(kTinyModel)}};
  ASSERT_EQ(cseg_train(trn.dump().c_str(),
                       [](const char* line, void* user) {
                         EXPECT_NO_THROW(json::parse(line));
                         ++*static_cast<int*>(user);
                       },
                       &lines, &out),
            CSEG_OK)
      << cseg_last_error();
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(take(out)["samples"], 2);
  const json missing{{"epochs", 1}, {"out", (dir / "x.cseg").string()}};
  EXPECT_EQ(cseg_train(missing.dump().c_str(), nullptr, nullptr, &out), CSEG_ERR_INVALID_ARGUMENT);

  for (const std::string name : {"a", "b"}) {
    const json bench{{"dataset", (dir / "ds").string()}, {"ckpt", (dir / "m.cseg").string()}, {"clicks", 3},
                     {"method", name}, {"out", (dir / (name + ".json")).string()},
                     {"csv", (dir / (name + ".csv")).string()}};
    ASSERT_EQ(cseg_bench(bench.dump().c_str(), &out), CSEG_OK) << cseg_last_error();
    const json report = take(out);
    EXPECT_EQ(report["mean_curve"].size(), 3u);
    EXPECT_TRUE(fs::exists(dir / (name + ".csv")));
  }
  const std::string a = (dir / "a.json").string(), b = (dir / "b.json").string(), svg = (dir / "p.svg").string();
  const char* reports[] = {a.c_str(), b.c_str()};
  ASSERT_EQ(cseg_report_plot(reports, 2, svg.c_str()), CSEG_OK) << cseg_last_error();
  std::stringstream svg_text;
  svg_text << std::ifstream(svg).rdbuf();
  EXPECT_NE(svg_text.str().find("<svg"), std::string::npos);
  EXPECT_EQ(cseg_report_plot(reports, 0, svg.c_str()), CSEG_ERR_INVALID_ARGUMENT);

  cseg_model* m = nullptr;
  ASSERT_EQ(cseg_model_load((dir / "m.cseg").string().c_str(), &m), CSEG_OK);
  const std::string image = (dir / "ds" / "images" / "000000.png").string();
  const std::string mask = (dir / "refined.png").string();
  ASSERT_TRUE(fs::exists(image));
  ASSERT_EQ(cseg_refine(m, image.c_str(), R"([{"x":40,"y":40,"pos":true}])", nullptr, 1, 2, 1e-4, mask.c_str()),
            CSEG_OK)
      << cseg_last_error();
  EXPECT_EQ(cseg_refine(m, image.c_str(), R"([{"x":400,"y":40,"pos":true}])", nullptr, 0, 2, 1e-4, mask.c_str()),
            CSEG_ERR_INVALID_ARGUMENT);
  const std::string filtered = (dir / "filtered.png").string();
  EXPECT_EQ(cseg_guided_filter_files(mask.c_str(), image.c_str(), 2, 1e-4, filtered.c_str()), CSEG_OK);
  char* click = nullptr;
  const std::string gt = (dir / "ds" / "masks" / "000000.png").string();
  ASSERT_EQ(cseg_simulate_click_files(mask.c_str(), gt.c_str(), 2, &click), CSEG_OK) << cseg_last_error();
  EXPECT_EQ(take(click)["k"], 2);
  cseg_model_free(m);
}

TEST(CApi, ServerAnswersHealth) {
  const auto dir = temp_dir("server");
  cseg_model* m = nullptr;
  ASSERT_EQ(cseg_model_create(kTinyModel, 1, &m), CSEG_OK);
  ASSERT_EQ(cseg_model_save(m, (dir / "m.cseg").string().c_str()), CSEG_OK);
  cseg_model_free(m);
  cseg_server* server = nullptr;
  EXPECT_EQ(cseg_server_start(R"({"port": 0})", &server), CSEG_ERR_INVALID_ARGUMENT);
  const json opt{{"ckpt", (dir / "m.cseg").string()}, {"port", 0}};
  ASSERT_EQ(cseg_server_start(opt.dump().c_str(), &server), CSEG_OK) << cseg_last_error();
  const int port = cseg_server_port(server);
  ASSERT_GT(port, 0);

  namespace http = boost::beast::http;
  boost::asio::io_context ioc;
  boost::asio::ip::tcp::socket socket(ioc);
  socket.connect({boost::asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port)});
  http::request<http::empty_body> req{http::verb::get, "/health", 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(socket, req);
  boost::beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(socket, buf, res);
  EXPECT_EQ(res.result(), http::status::ok);
  EXPECT_EQ(json::parse(res.body())["sessions"], 0);
  cseg_server_stop(server);
}

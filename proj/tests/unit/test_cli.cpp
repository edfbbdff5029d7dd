#include <gtest/gtest.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int status;
  std::string out, err;
};

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("clickseg_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::stringstream ss;
  ss << std::ifstream(p).rdbuf();
  return ss.str();
}

// Runs the CLI with stdout and stderr captured to files.
Result cli(const std::vector<std::string>& args) {
  static int counter = 0;
  const fs::path dir = temp_dir("io" + std::to_string(counter++));
  const pid_t pid = ::fork();
  if (pid == 0) {
    std::freopen((dir / "out").c_str(), "w", stdout);
    std::freopen((dir / "err").c_str(), "w", stderr);
    std::vector<char*> argv{const_cast<char*>(CLICKSEG_CLI)};
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execv(CLICKSEG_CLI, argv.data());
    ::_exit(127);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir / "out"), slurp(dir / "err")};
}

void expect_error_json(const Result& r, int exit_code) {
  EXPECT_EQ(r.status, exit_code) << r.err;
  const auto j = json::parse(r.err);
  EXPECT_TRUE(j.contains("error"));
  EXPECT_TRUE(j.contains("status"));
  EXPECT_TRUE(j.contains("code"));
}

}  // namespace

TEST(Cli, HelpListsSubcommands) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.status, 0);
  for (const char* sub : {"bench", "train", "synthgen", "refine", "simulate-clicks", "serve", "report-plot"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  for (const char* sub : {"bench", "train", "synthgen", "refine", "simulate-clicks", "serve", "report-plot"})
    EXPECT_EQ(cli({sub, "--help"}).status, 0) << sub;
}

TEST(Cli, UsageErrorsExitTwoWithJson) {
  expect_error_json(cli({}), 2);
  expect_error_json(cli({"frobnicate"}), 2);
  expect_error_json(cli({"train", "--manifest", "m.jsonl"}), 2);
  expect_error_json(cli({"bench", "--out", "r.json", "--clicks", "0"}), 2);
  expect_error_json(cli({"synthgen"}), 2);
}

TEST(Cli, LibraryErrorsExitOneWithJson) {
  const auto r = cli({"simulate-clicks", "--pred", "/nonexistent/p.png", "--gt", "/nonexistent/g.png"});
  expect_error_json(r, 1);
  EXPECT_EQ(json::parse(r.err)["status"], "io");
  expect_error_json(cli({"train", "--manifest", "/nonexistent/m.jsonl", "--out", "x.cseg"}), 1);
}

TEST(Cli, EndToEndPipeline) {
  const auto dir = temp_dir("pipeline");
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  auto r = cli({"synthgen", "-n", "2", "--seed", "4", "--out", p("m.jsonl"), "--render", p("ds")});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["samples"], 2);

  r = cli({"train", "--manifest", p("m.jsonl"), "--epochs", "1", "--clicks", "2", "--model", R"({"width_div":16})",
           "--log", p("train.jsonl"), "--out", p("m.cseg")});
  ASSERT_EQ(r.status, 0) << r.err;
  std::ifstream log(p("train.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = json::parse(line);
    EXPECT_TRUE(j.contains("epoch") && j.contains("image") && j.contains("losses"));
    ++lines;
  }
  EXPECT_EQ(lines, 2);

  r = cli({"bench", "--dataset", p("ds"), "--ckpt", p("m.cseg"), "--clicks", "3", "--out", p("r.json"), "--csv",
           p("r.csv")});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["images"], 2);
  EXPECT_EQ(json::parse(slurp(p("r.json")))["mean_curve"].size(), 3u);

  r = cli({"report-plot", p("r.json"), p("r.json"), "--out", p("r.svg")});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(slurp(p("r.svg")).find("<svg"), std::string::npos);

  const std::string image = p("ds/images/000000.png"), gt = p("ds/masks/000000.png");
  r = cli({"refine", "--ckpt", p("m.cseg"), "--image", image, "--clicks", R"([{"x":30,"y":30,"pos":true}])",
           "--guided", "--out", p("pred.png")});
  ASSERT_EQ(r.status, 0) << r.err;
  r = cli({"refine", "--in", p("pred.png"), "--guide", image, "--r", "3", "--out", p("filtered.png")});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(p("filtered.png")));
  expect_error_json(cli({"refine", "--in", p("pred.png"), "--out", p("x.png")}), 2);

  r = cli({"simulate-clicks", "--pred", p("pred.png"), "--gt", gt, "--k", "2"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto click = json::parse(r.out);
  EXPECT_EQ(click["k"], 2);
  EXPECT_TRUE(click["pos"].is_boolean());
}

TEST(Cli, ServeAnswersAndStopsOnSignal) {
  const auto dir = temp_dir("serve");
  const std::string manifest = (dir / "m.jsonl").string(), ckpt = (dir / "m.cseg").string();
  ASSERT_EQ(cli({"synthgen", "-n", "1", "--out", manifest}).status, 0);
  ASSERT_EQ(cli({"train", "--manifest", manifest, "--epochs", "0", "--model", R"({"width_div":16})", "--out", ckpt})
                .status,
            0);

  int fds[2];
  ASSERT_EQ(::pipe(fds), 0);
  const pid_t pid = ::fork();
  if (pid == 0) {
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    ::execl(CLICKSEG_CLI, CLICKSEG_CLI, "serve", "--ckpt", ckpt.c_str(), "--port", "0", static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  std::string first;
  char c;
  while (::read(fds[0], &c, 1) == 1 && c != '\n') first += c;
  ::close(fds[0]);
  const int port = json::parse(first)["port"];
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

  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
}

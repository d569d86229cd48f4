#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

int main(int argc, char** argv) {
  CLI::App app{"Minimal origin server for trying the gateway: serves a directory over HTTP"};
  std::string root = ".";
  std::string host = "127.0.0.1";
  int port = 8080;
  int delay_ms = 0;
  app.add_option("--root", root, "directory to serve")->capture_default_str();
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port)->capture_default_str();
  app.add_option("--delay-ms", delay_ms, "sleep before every response")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  httplib::Server server;
  server.Get(R"(/(.*))", [&](const httplib::Request& req, httplib::Response& res) {
    if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    const std::filesystem::path rel = std::filesystem::path(req.path).relative_path().lexically_normal();
    std::ifstream in(std::filesystem::path(root) / rel, std::ios::binary);
    if (rel.empty() || *rel.begin() == ".." || !in) {
      res.status = 404;
      res.set_content("not found\n", "text/plain");
      return;
    }
    const std::string body{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const std::string ext = rel.extension().string();
    res.set_content(body, ext == ".wml" ? "text/vnd.wap.wml" : ext == ".txt" ? "text/plain"
                                                                           : "application/octet-stream");
  });
  std::cerr << "wap-origin: serving " << root << " on http://" << host << ":" << port << "/\n";
  return server.listen(host, port) ? 0 : 2;
}

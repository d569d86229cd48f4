#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "wap/gateway.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WAP gateway: WDP/WTLS/WTP/WSP on one side, HTTP/1.1 on the other"};
  std::string config_file;
  std::map<std::string, std::string> overrides;
  auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        name, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
  };
  app.add_option("--config", config_file, "key = value file; flags override it");
  flag("--listen,--listen-port", "listen_port", "session WDP port and UDP port (default 9201)");
  flag("--connectionless-port", "connectionless_port", "connectionless WDP port (default 9200)");
  flag("--bearer", "bearer", "udp (sim exists only in-process)");
  flag("--security", "security", "off, mac or full");
  flag("--psk-file", "psk_file", "identity:hex-secret lines");
  flag("--http-timeout-ms", "http_timeout_ms", "origin timeout (default 5000)");
  flag("--session-ttl-s", "session_ttl_s", "suspended session lifetime (default 300)");
  flag("--log-level", "log_level", "debug, info, warn or error");
  flag("--bind", "bind_address", "IP to bind (default 127.0.0.1)");
  flag("--content-root", "content_root", "serve files from this directory instead of HTTP");
  CLI11_PARSE(app, argc, argv);

  wap::gateway::GatewayConfig config;
  try {
    if (!config_file.empty()) config = wap::gateway::load_config(config_file);
    for (const auto& [key, value] : overrides) wap::gateway::apply_setting(config, key, value);
  } catch (const std::exception& e) {
    std::cerr << "wapgw: " << e.what() << '\n';
    return 1;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  return wap::gateway::run_gateway(config, g_stop, std::cerr);
}

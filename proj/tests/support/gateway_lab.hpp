#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "harness.hpp"
#include "wap/gateway.hpp"
#include "wap/useragent.hpp"

namespace testsupport {

inline const std::string kAlicePsk = "000102030405060708090a0b0c0d0e0f";

/// Writes a PSK table to a fresh temporary file and returns its path.
inline std::filesystem::path write_psk_file(const std::string& contents) {
  static int counter = 0;
  auto path = std::filesystem::temp_directory_path() /
              ("wap-psk-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".txt");
  std::ofstream(path) << contents;
  return path;
}

/// A gateway on node "G" of a simulated network, in front of a StubOrigin.
struct GatewayLab {
  Lab lab;
  StubOrigin origin;
  std::ostringstream log_text;
  wap::gateway::Logger log{log_text};
  std::shared_ptr<wap::bearer::SimBearer> gw_bearer;
  std::unique_ptr<wap::gateway::GatewayService> service;

  explicit GatewayLab(wap::gateway::GatewayConfig config = sim_config(),
                      const wap::bearer::ImpairmentProfile& profile = {.delay_ms = 5},
                      wap::EventLoop::Clock clock = wap::EventLoop::Clock::Virtual)
      : lab(clock) {
    gw_bearer = lab.net->attach("G", profile);
    service = wap::gateway::GatewayService::start(config, gw_bearer, &log);
  }

  static wap::gateway::GatewayConfig sim_config() {
    wap::gateway::GatewayConfig c;
    c.bearer = wap::gateway::BearerKind::Sim;
    c.http_timeout_ms = 2000;
    return c;
  }

  std::unique_ptr<wap::ua::UserAgent> agent(const std::string& address, wap::ua::FetchOptions opts = {},
                                            const wap::bearer::ImpairmentProfile& profile = {.delay_ms = 5}) {
    Node n = node(address, profile);
    return std::make_unique<wap::ua::UserAgent>(n.wdp, "G", std::move(opts));
  }

  Node node(const std::string& address, const wap::bearer::ImpairmentProfile& profile = {.delay_ms = 5}) {
    Node n = lab.node(address, profile);
    nodes.push_back(n);
    return n;
  }

  std::vector<Node> nodes;
};

}  // namespace testsupport

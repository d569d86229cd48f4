#pragma once

#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "wap/udp_bearer.hpp"
#include "wap/useragent.hpp"

namespace tools {

struct ClientArgs {
  std::string gateway = "127.0.0.1:9201";
  std::uint16_t connectionless_port = wap::wdp::kConnectionlessPort;
  std::string security = "off";
  std::string psk_file;
  std::string identity;
  bool connectionless = false;
  bool trace = false;
  int timeout_ms = 2000;
};

inline void add_client_flags(CLI::App& app, ClientArgs& a) {
  app.add_option("--gateway", a.gateway, "gateway ip:port; the port is also its session WDP port")
      ->capture_default_str();
  app.add_option("--connectionless-port", a.connectionless_port, "gateway connectionless WDP port")
      ->capture_default_str();
  app.add_option("--security", a.security, "off, mac or full")
      ->check(CLI::IsMember({"off", "mac", "full"}))
      ->capture_default_str();
  app.add_option("--psk-file", a.psk_file, "identity:hex-secret lines");
  app.add_option("--identity", a.identity, "PSK identity (default: first in the file)");
  app.add_flag("--connectionless", a.connectionless, "single-datagram requests, no session");
  app.add_flag("--trace", a.trace, "print per-layer PDU trace lines to stderr");
  app.add_option("--timeout-ms", a.timeout_ms, "connectionless reply timeout")->capture_default_str();
}

struct ClientStack {
  std::unique_ptr<wap::EventLoop> loop;
  std::shared_ptr<wap::bearer::UdpBearer> bearer;
  std::shared_ptr<wap::wdp::Wdp> wdp;
  std::unique_ptr<wap::ua::UserAgent> agent;
};

/// Throws on bad arguments or an unusable PSK file.
inline ClientStack make_client(const ClientArgs& a) {
  const auto colon = a.gateway.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("--gateway must be ip:port");
  const int port = std::stoi(a.gateway.substr(colon + 1));
  if (port < 1 || port > 65535) throw std::invalid_argument("--gateway port out of range");

  wap::ua::FetchOptions opts;
  opts.connectionless = a.connectionless;
  opts.timeout = wap::Millis{a.timeout_ms};
  opts.gateway_session_port = static_cast<std::uint16_t>(port);
  opts.gateway_connectionless_port = a.connectionless_port;
  opts.headers = {{"User-Agent", "wapget/1"}};
  if (a.security != "off") {
    if (a.psk_file.empty()) throw std::invalid_argument("--psk-file is required with --security");
    const auto psks = wap::wtls::PskTable::load(a.psk_file);
    opts.identity = a.identity;
    if (opts.identity.empty()) {
      const auto ids = psks.identities();
      if (ids.empty()) throw std::invalid_argument("psk file has no entries");
      opts.identity = ids.front();
    }
    const wap::Bytes* psk = psks.find(opts.identity);
    if (!psk) throw std::invalid_argument("identity '" + opts.identity + "' not in psk file");
    opts.psk = *psk;
    opts.security = a.security == "full" ? wap::wtls::SecurityMode::Full : wap::wtls::SecurityMode::Integrity;
  }
  if (a.trace) opts.trace = [](const std::string& line) { std::cerr << line << '\n'; };

  ClientStack s;
  s.loop = std::make_unique<wap::EventLoop>(wap::EventLoop::Clock::Realtime);
  s.bearer = std::make_shared<wap::bearer::UdpBearer>(*s.loop, "0.0.0.0:0");
  s.wdp = wap::wdp::Wdp::create(s.bearer);
  s.agent = std::make_unique<wap::ua::UserAgent>(s.wdp, a.gateway.substr(0, colon + 1) + std::to_string(port),
                                                 std::move(opts));
  return s;
}

inline void print_deck(std::ostream& out, const wap::ua::RenderedDeck& deck) {
  for (const auto& line : deck.lines) out << line << '\n';
}

}  // namespace tools

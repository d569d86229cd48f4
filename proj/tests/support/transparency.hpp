#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "wap/udp_bearer.hpp"
#include "wap/wdp.hpp"
#include "harness.hpp"

namespace testsupport {

using Delivery = std::pair<std::uint16_t, wap::Bytes>;

/// The same loss-free script, sent from `a` to `b`: 120 datagrams across
/// three ports, sizes 0 to 1200 bytes, in bursts of up to six. Returns what
/// `b` received, in order.
inline std::vector<Delivery> run_transparency_script(wap::EventLoop& loop, const std::shared_ptr<wap::bearer::Bearer>& a,
                                                     const std::shared_ptr<wap::bearer::Bearer>& b) {
  auto sender = wap::wdp::Wdp::create(a);
  auto receiver = wap::wdp::Wdp::create(b);
  std::vector<Delivery> got;
  std::vector<std::shared_ptr<wap::wdp::WdpEndpoint>> ports;
  for (std::uint16_t port : {std::uint16_t{9200}, std::uint16_t{9201}, std::uint16_t{49152}}) {
    ports.push_back(receiver->bind(port));
    ports.back()->set_receive_handler([&got, port](const wap::WdpAddress&, wap::Bytes payload) {
      got.emplace_back(port, std::move(payload));
    });
  }
  auto out = sender->bind(30000);
  std::mt19937 rng(1234);
  const std::uint16_t targets[] = {9200, 9201, 49152};
  std::size_t sent = 0;
  while (sent < 120) {
    const std::size_t burst = std::min<std::size_t>(1 + rng() % 6, 120 - sent);
    for (std::size_t i = 0; i < burst; ++i, ++sent) {
      wap::Bytes payload(rng() % 1201);
      for (auto& x : payload) x = static_cast<std::uint8_t>(rng());
      out->send_to({b->address(), targets[rng() % 3]}, payload);
    }
    loop.run_until([&] { return got.size() == sent; }, wap::Millis{2000});
  }
  for (auto& p : ports) p->set_receive_handler(nullptr);
  return got;
}

inline std::vector<Delivery> transparency_over_sim() {
  Lab lab;
  return run_transparency_script(lab.loop, lab.net->attach("A"), lab.net->attach("B"));
}

inline std::vector<Delivery> transparency_over_udp() {
  wap::EventLoop loop(wap::EventLoop::Clock::Realtime);
  auto a = std::make_shared<wap::bearer::UdpBearer>(loop, "127.0.0.1:0");
  auto b = std::make_shared<wap::bearer::UdpBearer>(loop, "127.0.0.1:0");
  auto got = run_transparency_script(loop, a, b);
  a->close();
  b->close();
  return got;
}

}  // namespace testsupport

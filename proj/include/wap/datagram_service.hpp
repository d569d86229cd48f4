#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

#include "wap/bearer.hpp"
#include "wap/bytes.hpp"
#include "wap/event_loop.hpp"

namespace wap {

struct WdpAddress {
  bearer::BearerAddress bearer_addr;
  std::uint16_t port = 0;

  auto operator<=>(const WdpAddress&) const = default;
  std::string to_string() const { return bearer_addr + "/" + std::to_string(port); }
};

/// A port-addressed datagram service. WdpEndpoint provides it directly over a
/// bearer; wtls::SecureEndpoint provides the same surface with records
/// protected underneath, so WTP and connectionless WSP run unchanged on
/// either.
class DatagramService {
 public:
  using Handler = std::function<void(const WdpAddress& src, Bytes payload)>;

  virtual ~DatagramService() = default;

  virtual void send_to(const WdpAddress& dst, BytesView payload) = 0;
  /// Handlers run on the loop thread.
  virtual void set_receive_handler(Handler handler) = 0;
  /// Largest payload send_to() accepts.
  virtual std::size_t max_payload() const = 0;
  virtual WdpAddress local_address() const = 0;
  virtual EventLoop& loop() = 0;
};

}  // namespace wap

template <>
struct std::hash<wap::WdpAddress> {
  std::size_t operator()(const wap::WdpAddress& a) const noexcept {
    return std::hash<std::string>{}(a.bearer_addr) * 31 + a.port;
  }
};

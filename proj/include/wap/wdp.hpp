#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>

#include "wap/bearer.hpp"
#include "wap/datagram_service.hpp"

namespace wap::wdp {

inline constexpr std::uint16_t kConnectionlessPort = 9200;
inline constexpr std::uint16_t kSessionPort = 9201;
inline constexpr std::size_t kHeaderSize = 6;

/// Header is src_port, dst_port, payload length; all big-endian uint16.
struct WdpDatagram {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Bytes payload;

  bool operator==(const WdpDatagram&) const = default;
};

Bytes encode(const WdpDatagram& datagram);
/// Throws Error(TruncatedDatagram) when fewer than 6 + length bytes are
/// present and Error(LengthMismatch) when bytes trail the payload.
WdpDatagram decode(BytesView bytes);

struct Received {
  WdpAddress src;
  Bytes payload;
};

class Wdp;

class WdpEndpoint : public DatagramService {
 public:
  WdpEndpoint(std::shared_ptr<Wdp> wdp, std::uint16_t port);
  ~WdpEndpoint() override;

  /// Throws Error(OversizeDatagram) or Error(EndpointClosed).
  void send_to(const WdpAddress& dst, BytesView payload) override;
  void set_receive_handler(Handler handler) override;
  std::size_t max_payload() const override;
  WdpAddress local_address() const override;
  EventLoop& loop() override;

  std::optional<Received> try_recv();
  /// Drives the loop until a datagram arrives or `timeout` elapses.
  std::optional<Received> recv(Millis timeout);
  void close();
  std::uint16_t port() const { return port_; }

 private:
  friend class Wdp;
  void deliver(Received received);

  std::shared_ptr<Wdp> wdp_;
  const std::uint16_t port_;
  std::mutex mu_;
  std::deque<Received> inbox_;
  Handler handler_;
  bool closed_ = false;
};

/// Port demultiplexer over one bearer.
class Wdp : public std::enable_shared_from_this<Wdp> {
 public:
  static std::shared_ptr<Wdp> create(std::shared_ptr<bearer::Bearer> bearer);
  ~Wdp();

  /// Throws Error(InvalidPort) for port 0 and Error(PortInUse).
  std::shared_ptr<WdpEndpoint> bind(std::uint16_t port);

  bearer::Bearer& bearer() { return *bearer_; }
  /// Datagrams that failed to decode or had no bound destination port.
  std::uint64_t dropped() const;

 private:
  explicit Wdp(std::shared_ptr<bearer::Bearer> bearer) : bearer_(std::move(bearer)) {}
  friend class WdpEndpoint;
  void on_raw(bearer::RawDatagram raw);
  void unbind(std::uint16_t port, const WdpEndpoint* owner);

  std::shared_ptr<bearer::Bearer> bearer_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint16_t, std::weak_ptr<WdpEndpoint>> ports_;
  std::uint64_t dropped_ = 0;
};

}  // namespace wap::wdp

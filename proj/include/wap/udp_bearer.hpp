#pragma once

#include <memory>
#include <string>

#include "wap/bearer.hpp"

namespace wap::bearer {

/// One UDP socket carrying WDP bytes verbatim. Addresses are "ip:port"
/// literals. Requires an EventLoop running on Clock::Realtime.
class UdpBearer : public Bearer {
 public:
  /// `bind_address` is "ip:port"; port 0 picks an ephemeral port. Throws
  /// std::system_error if the socket cannot be bound.
  UdpBearer(EventLoop& loop, const std::string& bind_address,
            std::size_t mtu = kDefaultMtu);
  ~UdpBearer() override;

  const BearerAddress& address() const override { return address_; }
  std::size_t mtu() const override { return mtu_; }
  void send(RawDatagram datagram) override;
  /// Only mtu_bytes is honored; any nonzero impairment is InvalidProfile
  /// because loss on a real socket is environmental.
  void set_impairments(const ImpairmentProfile& profile) override;
  void close() override;

 private:
  void on_readable();

  int fd_ = -1;
  BearerAddress address_;
  std::size_t mtu_;
};

}  // namespace wap::bearer

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "wap/bytes.hpp"
#include "wap/event_loop.hpp"

namespace wap::bearer {

/// Opaque node identifier: a free-form name on the simulated network,
/// "ip:port" on UDP.
using BearerAddress = std::string;

inline constexpr std::size_t kDefaultMtu = 1400;
inline constexpr std::size_t kMinMtu = 64;

struct ImpairmentProfile {
  double loss_prob = 0.0;
  double dup_prob = 0.0;
  double reorder_prob = 0.0;
  std::uint32_t delay_ms = 0;
  std::uint32_t jitter_ms = 0;
  std::size_t mtu_bytes = kDefaultMtu;
  std::uint64_t seed = 0;

  /// Throws Error(InvalidProfile).
  void validate() const;
};

struct RawDatagram {
  BearerAddress src;
  BearerAddress dst;
  Bytes payload;

  bool operator==(const RawDatagram&) const = default;
};

/// A datagram carrier beneath WDP. Received datagrams are either queued for
/// try_recv()/recv() or, once a handler is installed, handed to it on the loop
/// thread in arrival order.
class Bearer {
 public:
  using Handler = std::function<void(RawDatagram)>;

  explicit Bearer(EventLoop& loop) : loop_(loop) {}
  virtual ~Bearer() = default;
  Bearer(const Bearer&) = delete;
  Bearer& operator=(const Bearer&) = delete;

  virtual const BearerAddress& address() const = 0;
  virtual std::size_t mtu() const = 0;
  /// Throws Error(OversizeDatagram) if the payload exceeds mtu(), and
  /// Error(BearerClosed) after close().
  virtual void send(RawDatagram datagram) = 0;
  virtual void set_impairments(const ImpairmentProfile& profile) = 0;

  /// Non-blocking; std::nullopt when nothing is queued.
  std::optional<RawDatagram> try_recv();
  /// Drives the loop until a datagram arrives or `timeout` elapses.
  std::optional<RawDatagram> recv(Millis timeout);
  void set_handler(Handler handler);
  virtual void close();
  bool is_open() const;

  EventLoop& loop() { return loop_; }

 protected:
  /// Called on the loop thread by implementations.
  void deliver(RawDatagram datagram);

 private:
  EventLoop& loop_;
  mutable std::mutex mu_;
  std::deque<RawDatagram> inbox_;
  Handler handler_;
  bool closed_ = false;
};

}  // namespace wap::bearer

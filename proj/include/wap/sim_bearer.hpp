#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <unordered_map>

#include "wap/bearer.hpp"

namespace wap::bearer {

class SimBearer;

/// What a scripted fault hook does with one outgoing datagram before the
/// probabilistic profile is consulted.
enum class FaultAction { Pass, Drop, Duplicate };

/// `index` counts sends on the bearer, starting at 0.
using FaultScript = std::function<FaultAction(const RawDatagram&, std::uint64_t index)>;

struct TapEvent {
  enum class Kind { Sent, Dropped, Delivered };
  Kind kind;
  Millis at;
  RawDatagram datagram;
};

/// In-process network connecting SimBearers by address. Impairments are
/// applied on the sending side.
class SimNetwork : public std::enable_shared_from_this<SimNetwork> {
 public:
  explicit SimNetwork(EventLoop& loop) : loop_(loop) {}

  /// Throws std::invalid_argument if the address is empty or taken.
  std::shared_ptr<SimBearer> attach(const BearerAddress& address,
                                    const ImpairmentProfile& profile = {});

  /// Observes every datagram as it is sent, dropped, and delivered.
  void set_tap(std::function<void(const TapEvent&)> tap);

  EventLoop& loop() { return loop_; }

 private:
  friend class SimBearer;
  void route(RawDatagram datagram, Millis delay);
  void detach(const BearerAddress& address);
  void notify(TapEvent::Kind kind, const RawDatagram& datagram);

  EventLoop& loop_;
  std::mutex mu_;
  std::unordered_map<BearerAddress, std::weak_ptr<SimBearer>> nodes_;
  std::function<void(const TapEvent&)> tap_;
};

/// Impaired channel endpoint. Loss, duplication (one extra copy), pairwise
/// swap reordering and uniform delay in [delay, delay + jitter] are drawn from
/// a seeded generator, so an identical send sequence reproduces an identical
/// delivery trace.
class SimBearer : public Bearer {
 public:
  SimBearer(std::shared_ptr<SimNetwork> network, BearerAddress address,
            const ImpairmentProfile& profile);
  ~SimBearer() override;

  const BearerAddress& address() const override { return address_; }
  std::size_t mtu() const override;
  void send(RawDatagram datagram) override;
  void set_impairments(const ImpairmentProfile& profile) override;
  void close() override;

  void set_fault_script(FaultScript script);
  std::uint64_t sent_count() const;

 private:
  friend class SimNetwork;
  void receive(RawDatagram datagram) { deliver(std::move(datagram)); }
  Millis draw_delay();
  void flush_held();

  static constexpr Millis kReorderHold{50};

  std::shared_ptr<SimNetwork> network_;
  const BearerAddress address_;

  mutable std::mutex mu_;
  ImpairmentProfile profile_;
  std::mt19937_64 rng_;
  FaultScript script_;
  std::uint64_t sends_ = 0;

  struct Held {
    RawDatagram datagram;
    Millis delay;
    TimerId flush_timer;
  };
  std::optional<Held> held_;
  bool detached_ = false;
};

}  // namespace wap::bearer

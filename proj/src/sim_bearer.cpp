#include "wap/sim_bearer.hpp"

#include <stdexcept>

#include "wap/error.hpp"

namespace wap::bearer {

std::shared_ptr<SimBearer> SimNetwork::attach(const BearerAddress& address,
                                              const ImpairmentProfile& profile) {
  if (address.empty()) throw std::invalid_argument("empty bearer address");
  profile.validate();
  std::lock_guard lock(mu_);
  auto it = nodes_.find(address);
  if (it != nodes_.end() && !it->second.expired())
    throw std::invalid_argument("bearer address in use: " + address);
  auto node = std::make_shared<SimBearer>(shared_from_this(), address, profile);
  nodes_[address] = node;
  return node;
}

void SimNetwork::set_tap(std::function<void(const TapEvent&)> tap) {
  std::lock_guard lock(mu_);
  tap_ = std::move(tap);
}

void SimNetwork::notify(TapEvent::Kind kind, const RawDatagram& datagram) {
  std::function<void(const TapEvent&)> tap;
  {
    std::lock_guard lock(mu_);
    tap = tap_;
  }
  if (tap) tap(TapEvent{kind, loop_.now(), datagram});
}

void SimNetwork::route(RawDatagram datagram, Millis delay) {
  auto self = shared_from_this();
  loop_.schedule(delay, [self, d = std::move(datagram)]() mutable {
    std::shared_ptr<SimBearer> target;
    {
      std::lock_guard lock(self->mu_);
      auto it = self->nodes_.find(d.dst);
      if (it != self->nodes_.end()) target = it->second.lock();
    }
    if (!target || !target->is_open()) {
      self->notify(TapEvent::Kind::Dropped, d);
      return;
    }
    self->notify(TapEvent::Kind::Delivered, d);
    target->receive(std::move(d));
  });
}

void SimNetwork::detach(const BearerAddress& address) {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(address);
  if (it != nodes_.end() && it->second.expired()) nodes_.erase(it);
}

SimBearer::SimBearer(std::shared_ptr<SimNetwork> network, BearerAddress address,
                     const ImpairmentProfile& profile)
    : Bearer(network->loop()),
      network_(std::move(network)),
      address_(std::move(address)),
      profile_(profile),
      rng_(profile.seed) {}

SimBearer::~SimBearer() {
  if (held_) loop().cancel(held_->flush_timer);
  network_->detach(address_);
}

std::size_t SimBearer::mtu() const {
  std::lock_guard lock(mu_);
  return profile_.mtu_bytes;
}

void SimBearer::set_impairments(const ImpairmentProfile& profile) {
  profile.validate();
  std::lock_guard lock(mu_);
  profile_ = profile;
  rng_.seed(profile.seed);
}

void SimBearer::set_fault_script(FaultScript script) {
  std::lock_guard lock(mu_);
  script_ = std::move(script);
}

std::uint64_t SimBearer::sent_count() const {
  std::lock_guard lock(mu_);
  return sends_;
}

void SimBearer::close() {
  {
    std::lock_guard lock(mu_);
    if (held_) {
      loop().cancel(held_->flush_timer);
      held_.reset();
    }
  }
  Bearer::close();
}

Millis SimBearer::draw_delay() {
  if (profile_.jitter_ms == 0) return Millis{profile_.delay_ms};
  std::uniform_int_distribution<std::uint32_t> jitter(0, profile_.jitter_ms);
  return Millis{profile_.delay_ms + jitter(rng_)};
}

void SimBearer::flush_held() {
  std::optional<Held> held;
  {
    std::lock_guard lock(mu_);
    held.swap(held_);
  }
  if (held) network_->route(std::move(held->datagram), Millis{0});
}

void SimBearer::send(RawDatagram datagram) {
  if (!is_open()) throw Error(Errc::BearerClosed);
  datagram.src = address_;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::unique_lock lock(mu_);
  if (datagram.payload.size() > profile_.mtu_bytes)
    throw Error(Errc::OversizeDatagram, std::to_string(datagram.payload.size()) + " > mtu " +
                                            std::to_string(profile_.mtu_bytes));
  const std::uint64_t index = sends_++;
  FaultAction scripted = script_ ? script_(datagram, index) : FaultAction::Pass;
  lock.unlock();
  network_->notify(TapEvent::Kind::Sent, datagram);
  lock.lock();

  if (scripted == FaultAction::Drop || unit(rng_) < profile_.loss_prob) {
    lock.unlock();
    network_->notify(TapEvent::Kind::Dropped, datagram);
    return;
  }
  const bool duplicate = scripted == FaultAction::Duplicate || unit(rng_) < profile_.dup_prob;
  const bool reorder = unit(rng_) < profile_.reorder_prob;
  const Millis delay = draw_delay();
  const Millis dup_delay = duplicate ? std::max(delay, draw_delay()) : delay;

  if (held_) {
    // Swap with the held predecessor: this one goes first.
    Held held = std::move(*held_);
    held_.reset();
    loop().cancel(held.flush_timer);
    lock.unlock();
    if (duplicate) network_->route(datagram, delay);
    network_->route(std::move(datagram), delay);
    network_->route(std::move(held.datagram), std::max(held.delay, dup_delay));
    return;
  }
  if (reorder) {
    TimerId timer = loop().schedule(kReorderHold + delay, [this] { flush_held(); });
    if (duplicate) {
      lock.unlock();
      network_->route(datagram, dup_delay);
      lock.lock();
    }
    held_ = Held{std::move(datagram), delay, timer};
    return;
  }
  lock.unlock();
  if (duplicate) {
    network_->route(datagram, delay);
    network_->route(std::move(datagram), dup_delay);
  } else {
    network_->route(std::move(datagram), delay);
  }
}

}  // namespace wap::bearer

#include "wap/bearer.hpp"

#include "wap/error.hpp"

namespace wap::bearer {

void ImpairmentProfile::validate() const {
  auto is_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!is_prob(loss_prob) || !is_prob(dup_prob) || !is_prob(reorder_prob))
    throw Error(Errc::InvalidProfile, "probabilities must lie in [0,1]");
  if (mtu_bytes < kMinMtu)
    throw Error(Errc::InvalidProfile, "mtu must be at least " + std::to_string(kMinMtu));
}

std::optional<RawDatagram> Bearer::try_recv() {
  std::lock_guard lock(mu_);
  if (closed_) throw Error(Errc::BearerClosed);
  if (inbox_.empty()) return std::nullopt;
  RawDatagram d = std::move(inbox_.front());
  inbox_.pop_front();
  return d;
}

std::optional<RawDatagram> Bearer::recv(Millis timeout) {
  auto ready = [this] {
    std::lock_guard lock(mu_);
    return closed_ || !inbox_.empty();
  };
  loop_.run_until(ready, timeout);
  return try_recv();
}

void Bearer::set_handler(Handler handler) {
  std::deque<RawDatagram> backlog;
  {
    std::lock_guard lock(mu_);
    handler_ = std::move(handler);
    if (handler_) backlog.swap(inbox_);
  }
  for (auto& d : backlog) deliver(std::move(d));
}

void Bearer::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  inbox_.clear();
  handler_ = nullptr;
}

bool Bearer::is_open() const {
  std::lock_guard lock(mu_);
  return !closed_;
}

void Bearer::deliver(RawDatagram datagram) {
  Handler handler;
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (!handler_) {
      inbox_.push_back(std::move(datagram));
      return;
    }
    handler = handler_;
  }
  handler(std::move(datagram));
}

}  // namespace wap::bearer

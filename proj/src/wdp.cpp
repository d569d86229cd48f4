#include "wap/wdp.hpp"

#include "wap/error.hpp"

namespace wap::wdp {

Bytes encode(const WdpDatagram& datagram) {
  if (datagram.payload.size() > 0xFFFF)
    throw Error(Errc::OversizeDatagram, "payload exceeds 16-bit length field");
  Bytes out;
  out.reserve(kHeaderSize + datagram.payload.size());
  put_u16(out, datagram.src_port);
  put_u16(out, datagram.dst_port);
  put_u16(out, static_cast<std::uint16_t>(datagram.payload.size()));
  append(out, datagram.payload);
  return out;
}

WdpDatagram decode(BytesView bytes) {
  if (bytes.size() < kHeaderSize) throw Error(Errc::TruncatedDatagram, "short header");
  const std::size_t length = get_u16(bytes, 4);
  if (bytes.size() < kHeaderSize + length)
    throw Error(Errc::TruncatedDatagram, "length field exceeds datagram");
  if (bytes.size() > kHeaderSize + length)
    throw Error(Errc::LengthMismatch, "trailing bytes after payload");
  return WdpDatagram{get_u16(bytes, 0), get_u16(bytes, 2),
                     Bytes(bytes.begin() + kHeaderSize, bytes.end())};
}

std::shared_ptr<Wdp> Wdp::create(std::shared_ptr<bearer::Bearer> bearer) {
  std::shared_ptr<Wdp> wdp(new Wdp(std::move(bearer)));
  std::weak_ptr<Wdp> weak = wdp;
  wdp->bearer_->set_handler([weak](bearer::RawDatagram raw) {
    if (auto self = weak.lock()) self->on_raw(std::move(raw));
  });
  return wdp;
}

Wdp::~Wdp() { bearer_->set_handler(nullptr); }

std::shared_ptr<WdpEndpoint> Wdp::bind(std::uint16_t port) {
  if (port == 0) throw Error(Errc::InvalidPort, "port 0");
  std::lock_guard lock(mu_);
  auto it = ports_.find(port);
  if (it != ports_.end() && !it->second.expired())
    throw Error(Errc::PortInUse, std::to_string(port));
  auto endpoint = std::make_shared<WdpEndpoint>(shared_from_this(), port);
  ports_[port] = endpoint;
  return endpoint;
}

std::uint64_t Wdp::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void Wdp::unbind(std::uint16_t port, const WdpEndpoint* owner) {
  std::lock_guard lock(mu_);
  auto it = ports_.find(port);
  if (it == ports_.end()) return;
  auto current = it->second.lock();
  if (!current || current.get() == owner) ports_.erase(it);
}

void Wdp::on_raw(bearer::RawDatagram raw) {
  WdpDatagram datagram;
  try {
    datagram = decode(raw.payload);
  } catch (const Error&) {
    std::lock_guard lock(mu_);
    ++dropped_;
    return;
  }
  std::shared_ptr<WdpEndpoint> endpoint;
  {
    std::lock_guard lock(mu_);
    auto it = ports_.find(datagram.dst_port);
    if (it != ports_.end()) endpoint = it->second.lock();
    if (!endpoint) {
      ++dropped_;
      return;
    }
  }
  endpoint->deliver(Received{WdpAddress{raw.src, datagram.src_port}, std::move(datagram.payload)});
}

WdpEndpoint::WdpEndpoint(std::shared_ptr<Wdp> wdp, std::uint16_t port)
    : wdp_(std::move(wdp)), port_(port) {}

WdpEndpoint::~WdpEndpoint() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  wdp_->unbind(port_, this);
}

void WdpEndpoint::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
    inbox_.clear();
    handler_ = nullptr;
  }
  wdp_->unbind(port_, this);
}

void WdpEndpoint::send_to(const WdpAddress& dst, BytesView payload) {
  {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(Errc::EndpointClosed);
  }
  if (payload.size() > max_payload())
    throw Error(Errc::OversizeDatagram, std::to_string(payload.size()) + " > " +
                                            std::to_string(max_payload()));
  WdpDatagram datagram{port_, dst.port, Bytes(payload.begin(), payload.end())};
  wdp_->bearer().send(bearer::RawDatagram{wdp_->bearer().address(), dst.bearer_addr,
                                          encode(datagram)});
}

void WdpEndpoint::set_receive_handler(Handler handler) {
  std::deque<Received> backlog;
  {
    std::lock_guard lock(mu_);
    handler_ = std::move(handler);
    if (handler_) backlog.swap(inbox_);
  }
  for (auto& r : backlog) deliver(std::move(r));
}

std::size_t WdpEndpoint::max_payload() const {
  const std::size_t mtu = wdp_->bearer().mtu();
  return std::min<std::size_t>(mtu - kHeaderSize, 0xFFFF);
}

WdpAddress WdpEndpoint::local_address() const { return WdpAddress{wdp_->bearer().address(), port_}; }

EventLoop& WdpEndpoint::loop() { return wdp_->bearer().loop(); }

std::optional<Received> WdpEndpoint::try_recv() {
  std::lock_guard lock(mu_);
  if (closed_) throw Error(Errc::EndpointClosed);
  if (inbox_.empty()) return std::nullopt;
  Received r = std::move(inbox_.front());
  inbox_.pop_front();
  return r;
}

std::optional<Received> WdpEndpoint::recv(Millis timeout) {
  loop().run_until(
      [this] {
        std::lock_guard lock(mu_);
        return closed_ || !inbox_.empty();
      },
      timeout);
  return try_recv();
}

void WdpEndpoint::deliver(Received received) {
  Handler handler;
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (!handler_) {
      inbox_.push_back(std::move(received));
      return;
    }
    handler = handler_;
  }
  handler(received.src, std::move(received.payload));
}

}  // namespace wap::wdp

#include "wap/udp_bearer.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <stdexcept>
#include <system_error>

#include "wap/error.hpp"

namespace wap::bearer {

namespace {

sockaddr_in parse_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("expected ip:port, got " + text);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  const std::string host = text.substr(0, colon);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw std::invalid_argument("bad IPv4 literal: " + host);
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::invalid_argument("bad port in " + text);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  return addr;
}

std::string format_address(const sockaddr_in& addr) {
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
  return std::string(buf) + ":" + std::to_string(ntohs(addr.sin_port));
}

}  // namespace

UdpBearer::UdpBearer(EventLoop& loop, const std::string& bind_address, std::size_t mtu)
    : Bearer(loop), mtu_(mtu) {
  if (loop.clock() != EventLoop::Clock::Realtime)
    throw std::logic_error("UdpBearer requires a realtime event loop");
  if (mtu < kMinMtu) throw Error(Errc::InvalidProfile, "mtu below minimum");
  sockaddr_in addr = parse_address(bind_address);
  fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw std::system_error(errno, std::generic_category(), "socket");
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    throw std::system_error(err, std::generic_category(), "bind " + bind_address);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  address_ = format_address(addr);
  loop.watch_fd(fd_, [this] { on_readable(); });
}

UdpBearer::~UdpBearer() { close(); }

void UdpBearer::close() {
  if (fd_ >= 0) {
    loop().unwatch_fd(fd_);
    ::close(fd_);
    fd_ = -1;
  }
  Bearer::close();
}

void UdpBearer::set_impairments(const ImpairmentProfile& profile) {
  profile.validate();
  if (profile.loss_prob != 0 || profile.dup_prob != 0 || profile.reorder_prob != 0 ||
      profile.delay_ms != 0 || profile.jitter_ms != 0)
    throw Error(Errc::InvalidProfile, "the UDP bearer does not simulate impairments");
  mtu_ = profile.mtu_bytes;
}

void UdpBearer::send(RawDatagram datagram) {
  if (fd_ < 0) throw Error(Errc::BearerClosed);
  if (datagram.payload.size() > mtu_)
    throw Error(Errc::OversizeDatagram,
                std::to_string(datagram.payload.size()) + " > mtu " + std::to_string(mtu_));
  const sockaddr_in to = parse_address(datagram.dst);
  // Loss on a real socket (ENOBUFS, ECONNREFUSED from a prior ICMP) is treated
  // as environmental, same as a drop on the air.
  ::sendto(fd_, datagram.payload.data(), datagram.payload.size(), 0,
           reinterpret_cast<const sockaddr*>(&to), sizeof to);
}

void UdpBearer::on_readable() {
  std::uint8_t buf[65536];
  while (fd_ >= 0) {
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const ssize_t n =
        ::recvfrom(fd_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) {
      if (errno == EINTR) continue;
      return;  // EAGAIN, or a queued ICMP error
    }
    deliver(RawDatagram{format_address(from), address_, Bytes(buf, buf + n)});
  }
}

}  // namespace wap::bearer

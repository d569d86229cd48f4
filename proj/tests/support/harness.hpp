#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>

#include "wap/sim_bearer.hpp"
#include "wap/wdp.hpp"
#include "wap/wtp.hpp"
#include "wap/wtp_pdu.hpp"

namespace testsupport {

using namespace std::chrono_literals;

inline std::filesystem::path data_dir() { return WAP_TEST_DATA_DIR; }
inline std::filesystem::path pages_dir() { return data_dir() / "pages"; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline const std::vector<std::string> kPages = {"index.wml", "news.wml", "weather.wml", "about.wml",
                                                "forecast.wml"};

/// A loopback UDP port that was free a moment ago.
inline std::uint16_t free_udp_port() {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

struct Node {
  std::shared_ptr<wap::bearer::SimBearer> bearer;
  std::shared_ptr<wap::wdp::Wdp> wdp;
};

/// Event loop (virtual time unless asked otherwise) plus a simulated network.
struct Lab {
  explicit Lab(wap::EventLoop::Clock clock = wap::EventLoop::Clock::Virtual) : loop(clock) {}

  wap::EventLoop loop;
  std::shared_ptr<wap::bearer::SimNetwork> net = std::make_shared<wap::bearer::SimNetwork>(loop);

  Node node(const std::string& address, const wap::bearer::ImpairmentProfile& profile = {}) {
    Node n;
    n.bearer = net->attach(address, profile);
    n.wdp = wap::wdp::Wdp::create(n.bearer);
    return n;
  }
};

/// Renders every datagram the network carries as WTP PDUs, one line per
/// datagram: `A>B Invoke tid=1 rid=0 uak=0` with ` DROPPED` appended when the
/// bearer discarded it. Concatenated PDUs are joined with " + ".
class WtpTrace {
 public:
  explicit WtpTrace(wap::bearer::SimNetwork& net) {
    net.set_tap([this](const wap::bearer::TapEvent& e) { on_tap(e); });
  }

  std::vector<std::string> lines() const {
    std::lock_guard lock(mu_);
    return lines_;
  }

 private:
  static std::string describe(const wap::bearer::RawDatagram& d) {
    std::string out = d.src + ">" + d.dst + " ";
    try {
      const auto wdp = wap::wdp::decode(d.payload);
      bool first = true;
      for (const auto& raw : wap::wtp::split(wdp.payload)) {
        const auto pdu = wap::wtp::decode(raw);
        if (!first) out += " + ";
        first = false;
        out += std::string(wap::wtp::to_string(pdu.type)) + " tid=" + std::to_string(pdu.tid) +
               " rid=" + (pdu.rid ? "1" : "0") + " uak=" + (pdu.uak ? "1" : "0");
      }
    } catch (const std::exception&) {
      out += "?";
    }
    return out;
  }

  void on_tap(const wap::bearer::TapEvent& e) {
    std::lock_guard lock(mu_);
    if (e.kind == wap::bearer::TapEvent::Kind::Sent) {
      lines_.push_back(describe(e.datagram));
    } else if (e.kind == wap::bearer::TapEvent::Kind::Dropped && !lines_.empty()) {
      lines_.back() += " DROPPED";
    }
  }

  mutable std::mutex mu_;
  std::vector<std::string> lines_;
};

/// HTTP/1.1 origin on an ephemeral loopback port. Serves the page corpus
/// plus a few behaviour routes:
///   /slow/<ms>/<file>  sleeps first     /status/<code>  empty body, that code
///   /echo              POST body back    /headers        request headers as text
///   /broken.wml        malformed WML     /binary         bytes 0..255
class StubOrigin {
 public:
  explicit StubOrigin(std::filesystem::path root = pages_dir()) : root_(std::move(root)) {
    server_.Get(R"(/slow/(\d+)/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(std::stoi(req.matches[1])));
      serve_file(req.matches[2], res);
    });
    server_.Get(R"(/status/(\d+))", [](const httplib::Request& req, httplib::Response& res) {
      res.status = std::stoi(req.matches[1]);
      res.set_content("status " + std::string(req.matches[1]), "text/plain");
    });
    server_.Post("/echo", [](const httplib::Request& req, httplib::Response& res) {
      res.set_content(req.body, "application/octet-stream");
    });
    server_.Get("/headers", [](const httplib::Request& req, httplib::Response& res) {
      std::string out;
      for (const auto& [k, v] : req.headers) out += k + ": " + v + "\n";
      res.set_content(out, "text/plain");
    });
    server_.Get("/broken.wml", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<wml><card><p>unterminated</card></wml>", "text/vnd.wap.wml");
    });
    server_.Get("/binary", [](const httplib::Request&, httplib::Response& res) {
      std::string body;
      for (int i = 0; i < 256; ++i) body.push_back(static_cast<char>(i));
      res.set_content(body, "application/octet-stream");
    });
    server_.Get(R"(/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      serve_file(req.matches[1], res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubOrigin() {
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/" + path;
  }
  int hits() const { return hits_.load(); }

  /// The same resource fetched straight over HTTP, bypassing the gateway.
  std::string direct(const std::string& path) const {
    httplib::Client client("127.0.0.1", port_);
    auto res = client.Get("/" + path);
    return res ? res->body : std::string();
  }

 private:
  void serve_file(const std::string& rel, httplib::Response& res) const {
    const std::string body = read_file(root_ / rel);
    if (body.empty()) {
      res.status = 404;
      res.set_content("not found", "text/plain");
      return;
    }
    const bool wml = rel.ends_with(".wml");
    res.set_content(body, wml ? "text/vnd.wap.wml" : "text/plain");
  }

  std::filesystem::path root_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
};

}  // namespace testsupport

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>

#include "wap/bearer.hpp"
#include "wap/wdp.hpp"
#include "wap/wsp.hpp"
#include "wap/wtls.hpp"
#include "wap/wtp.hpp"

namespace wap::gateway {

enum class BearerKind { Sim, Udp };
enum class Security { Off, Mac, Full };

std::string_view to_string(BearerKind kind);
std::string_view to_string(Security security);

struct GatewayConfig {
  std::uint16_t listen_port = wdp::kSessionPort;
  std::uint16_t connectionless_port = wdp::kConnectionlessPort;
  BearerKind bearer = BearerKind::Udp;
  Security security = Security::Off;
  std::string psk_file;
  int http_timeout_ms = 5000;
  int session_ttl_s = 300;
  bearer::ImpairmentProfile impairments;
  std::string log_level = "info";
  /// IP the UDP bearer binds; its UDP port is listen_port.
  std::string bind_address = "127.0.0.1";
  /// When set, requests are answered from this directory instead of HTTP.
  std::string content_root;

  /// Throws Error(ConfigError).
  void validate() const;
};

/// Applies one `key = value` setting. Throws Error(ConfigError).
void apply_setting(GatewayConfig& config, const std::string& key, const std::string& value);
/// Flat `key = value` lines; '#' starts a comment. Throws Error(ConfigError).
GatewayConfig parse_config(std::string_view text, GatewayConfig base = {});
GatewayConfig load_config(const std::filesystem::path& path, GatewayConfig base = {});

struct HttpExchange {
  std::string method;
  std::string url;
  wsp::Headers request_headers;
  Bytes request_body;
  int status = 0;
  wsp::Headers response_headers;
  Bytes response_body;
};

struct HttpUrl {
  std::string host;
  std::uint16_t port = 80;
  std::string target;  // path plus query, always starting with '/'
};

/// Throws Error(BadUri) unless `url` is an absolute http URL with a host.
HttpUrl parse_http_url(const std::string& url);

/// GET/POST with headers as sent plus `Via: wap-gateway/1`. Throws
/// Error(BadUri).
HttpExchange translate_request(const wsp::Request& request);

/// Compacts the response half into a Reply, encoding WML bodies to the
/// tokenized form. Never throws: content that fails to encode becomes a 502
/// with a text/plain diagnostic.
wsp::Reply translate_response(const HttpExchange& exchange);

/// Fills in the response half over HTTP/1.1. Throws
/// Error(OriginUnreachable | OriginTimeout).
void fetch_origin(HttpExchange& exchange, Millis timeout);

/// 400 for BadUri, 504 for OriginTimeout, 502 for the rest.
wsp::Reply failure_reply(const Error& error);

/// Produces the response half of an exchange.
using OriginFn = std::function<void(HttpExchange&, Millis timeout)>;

OriginFn http_origin();
/// Serves files below `root` by URL path, ignoring the host. `.wml` files go
/// out as text/vnd.wap.wml and `.txt` as text/plain.
OriginFn static_origin(std::filesystem::path root);

class Logger {
 public:
  enum class Level { Debug, Info, Warn, Error };

  explicit Logger(std::ostream& out, Level level = Level::Info) : out_(out), level_(level) {}

  /// Throws Error(ConfigError) for an unknown level name.
  static Level parse_level(std::string_view name);

  void log(Level level, const std::string& message);
  /// `ts level session tid method uri status dur_ms`
  void request(const wsp::RequestRecord& record);

 private:
  std::ostream& out_;
  Level level_;
  std::mutex mu_;
};

struct GatewayOptions {
  Millis http_timeout{5000};
  Millis session_ttl{300'000};
  wtp::RetransmissionPolicy policy;
  std::size_t workers = 4;
  OriginFn origin;  // defaults to http_origin()
  std::function<void(const wsp::RequestRecord&)> on_request_done;
};

class WorkerPool;

/// WSP server plus protocol conversion. Origin fetches run on a worker pool
/// and post their Reply back to the loop.
class Gateway {
 public:
  Gateway(std::shared_ptr<DatagramService> session_service,
          std::shared_ptr<DatagramService> connectionless_service, GatewayOptions options);
  ~Gateway();

  /// Requests arriving after this are answered with 503.
  void begin_drain() { draining_ = true; }
  /// No fetch outstanding and no transaction waiting on the wireless side.
  bool idle() const;
  std::size_t in_flight() const { return in_flight_.load(); }

  wsp::Server& server() { return *server_; }
  wtp::Provider& provider() { return *provider_; }

 private:
  void handle(const wsp::Request& request, wsp::Responder respond);

  GatewayOptions options_;
  std::shared_ptr<wtp::Provider> provider_;
  std::shared_ptr<wsp::Server> server_;
  std::unique_ptr<WorkerPool> pool_;
  std::atomic<std::size_t> in_flight_{0};
  bool draining_ = false;
};

/// A gateway assembled over one bearer: WDP ports for both services, WTLS
/// when configured, and the origin chosen by the config.
class GatewayService {
 public:
  /// Throws Error(ConfigError) for an invalid config or unreadable PSK file,
  /// and Error(PortInUse) when the WDP ports are taken.
  static std::unique_ptr<GatewayService> start(const GatewayConfig& config,
                                               std::shared_ptr<bearer::Bearer> bearer,
                                               Logger* log = nullptr, OriginFn origin = {},
                                               wtp::RetransmissionPolicy policy = {});

  Gateway& gateway() { return *gateway_; }
  EventLoop& loop() { return bearer_->loop(); }
  /// Null unless security is on.
  wtls::SecureEndpoint* secure_sessions() { return secure_sessions_.get(); }

  /// Stops taking requests and runs the loop until idle or `limit` passes.
  /// Returns true if everything drained.
  bool drain(Millis limit = Millis{2000});

 private:
  GatewayService() = default;

  std::shared_ptr<bearer::Bearer> bearer_;
  std::shared_ptr<wdp::Wdp> wdp_;
  std::shared_ptr<wdp::WdpEndpoint> session_port_;
  std::shared_ptr<wdp::WdpEndpoint> connectionless_port_;
  std::shared_ptr<wtls::SecureEndpoint> secure_sessions_;
  std::shared_ptr<wtls::SecureEndpoint> secure_connectionless_;
  std::unique_ptr<Gateway> gateway_;
};

/// Process driver behind `wapgw`: UDP bearer on a realtime loop, serves until
/// `stop` becomes true, then drains. Returns 0 on a clean exit, 1 for a config
/// error and 2 when the socket or ports cannot be bound.
int run_gateway(const GatewayConfig& config, const std::atomic<bool>& stop, std::ostream& log);

}  // namespace wap::gateway

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wap/wdp.hpp"
#include "wap/wml.hpp"
#include "wap/wsp.hpp"
#include "wap/wtls.hpp"
#include "wap/wtp.hpp"

namespace wap::ua {

struct Link {
  std::size_t index = 0;  // 1-based
  std::string href;
  std::string label;
  bool operator==(const Link&) const = default;
};

struct RenderedDeck {
  std::vector<std::string> lines;
  std::vector<Link> links;
  bool operator==(const RenderedDeck&) const = default;
};

/// Renders the first card: one line per `p`, broken at `br`, links inline as
/// "[n] label", `do` elements (the card's, then the templates') as
/// "[action] label". Whitespace runs collapse to one space. Throws
/// Error(EmptyDeck) when there is no card.
RenderedDeck render(const wml::Document& doc);

/// Plain text split into lines; no links.
RenderedDeck render_text(std::string_view text);

/// Resolves `href` against the absolute URL `base`.
std::string resolve_url(const std::string& base, const std::string& href);

using TraceSink = std::function<void(const std::string&)>;

/// Logs every datagram crossing it as `wdp tx|rx <addr>/<port> len=<n>`.
class TracedService : public DatagramService {
 public:
  TracedService(std::shared_ptr<DatagramService> inner, TraceSink sink, std::string layer = "wdp");

  void send_to(const WdpAddress& dst, BytesView payload) override;
  void set_receive_handler(Handler handler) override;
  std::size_t max_payload() const override { return inner_->max_payload(); }
  WdpAddress local_address() const override { return inner_->local_address(); }
  EventLoop& loop() override { return inner_->loop(); }

 private:
  std::shared_ptr<DatagramService> inner_;
  TraceSink sink_;
  std::string layer_;
};

struct FetchOptions {
  wtls::SecurityMode security = wtls::SecurityMode::Off;
  std::string identity;
  Bytes psk;
  bool connectionless = false;
  wsp::Headers headers;
  /// Connectionless reply timeout.
  Millis timeout{2000};
  wtp::RetransmissionPolicy policy;
  wtls::HandshakeOptions handshake;
  wsp::Headers capabilities;
  /// WDP ports the agent binds: this one for sessions, the next for
  /// connectionless requests.
  std::uint16_t local_port = 49152;
  std::uint16_t gateway_session_port = wdp::kSessionPort;
  std::uint16_t gateway_connectionless_port = wdp::kConnectionlessPort;
  TraceSink trace;
};

struct FetchResult {
  std::string url;
  wsp::Reply reply;
  /// Set when the body was tokenized WML.
  std::optional<wml::Document> document;

  std::string content_type() const;
};

/// Text for display: the rendered deck for WML, the raw body otherwise.
RenderedDeck render_result(const FetchResult& result);

/// Client side of the whole stack over one WDP instance. The session is
/// opened on the first connection-oriented fetch and reused afterwards.
class UserAgent {
 public:
  UserAgent(std::shared_ptr<wdp::Wdp> wdp, bearer::BearerAddress gateway, FetchOptions options = {});
  ~UserAgent();

  /// Throws the stack's errors: ConnectRefused, TransactionTimeout, Timeout,
  /// HandshakeTimeout, AuthenticationFailure, MalformedBinary and so on.
  FetchResult fetch(const std::string& url);

  /// Follows link `index` of `deck`, resolving it against the last URL.
  /// Throws Error(NoSuchLink).
  std::pair<FetchResult, RenderedDeck> navigate(const RenderedDeck& deck, std::size_t index);

  void suspend();
  void resume();
  void disconnect();

  /// Null until a session has been opened.
  wsp::Client* session() { return client_.get(); }
  const FetchOptions& options() const { return options_; }

 private:
  void open_session();
  std::shared_ptr<DatagramService> secure(std::shared_ptr<DatagramService> lower, std::uint16_t port);
  FetchResult finish(std::string url, wsp::Reply reply);

  std::shared_ptr<wdp::Wdp> wdp_;
  bearer::BearerAddress gateway_;
  FetchOptions options_;
  std::shared_ptr<wtp::Provider> provider_;
  std::unique_ptr<wsp::Client> client_;
  std::shared_ptr<DatagramService> connectionless_service_;
  std::unique_ptr<wsp::ConnectionlessClient> connectionless_;
  std::string last_url_;
};

}  // namespace wap::ua

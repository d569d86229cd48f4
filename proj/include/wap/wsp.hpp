#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>

#include "wap/datagram_service.hpp"
#include "wap/error.hpp"
#include "wap/wsp_codec.hpp"
#include "wap/wtp.hpp"

namespace wap::wsp {

enum class SessionState { Connecting, Connected, Suspended, Closed };

enum class SessionEvent { ConnectOk, ConnectFailed, Suspend, ResumeOk, ResumeRefused, Disconnect };

std::string_view to_string(SessionState state);

/// The session machine shared by client and server bookkeeping. Returns
/// std::nullopt for an event that is illegal in `from`.
std::optional<SessionState> next_state(SessionState from, SessionEvent event);

/// CONNECTING -> CONNECTED -> {SUSPENDED <-> CONNECTED} -> CLOSED, plus
/// CONNECTING -> CLOSED for a refused connect.
bool legal_transition(SessionState from, SessionState to);

struct Reply {
  std::uint16_t status = 0;
  Headers headers;
  Bytes body;

  /// First header with this exact name, if any.
  std::optional<std::string> header(std::string_view name) const;

  bool operator==(const Reply&) const = default;
};

Message to_message(const Reply& reply);
Reply from_message(const Message& message);

/// Connection-oriented client: every exchange is a class 2 transaction except
/// Suspend and Disconnect, which are class 0.
class Client {
 public:
  using ReplyFn = std::function<void(std::optional<Reply>, std::optional<Error>)>;

  Client(std::shared_ptr<wtp::Provider> provider, WdpAddress gateway);

  /// Throws Error(ConnectRefused | TransactionTimeout).
  void connect(const Headers& capabilities = {});
  /// Throws Error(SessionNotConnected | TransactionTimeout | MethodAborted |
  /// MalformedMessage).
  Reply method(PduType method, const std::string& uri, const Headers& headers = {},
               BytesView body = {});
  Reply get(const std::string& uri, const Headers& headers = {}) {
    return method(PduType::Get, uri, headers);
  }
  /// Non-blocking variant; several may be outstanding on one session.
  void method_async(PduType method, const std::string& uri, const Headers& headers,
                    BytesView body, ReplyFn on_reply);

  /// Throws Error(WrongState).
  void suspend();
  /// Throws Error(WrongState | ResumeRefused | TransactionTimeout).
  void resume();
  /// Moves a suspended session onto another transaction provider, e.g. after
  /// a bearer change; the next resume() goes out through it.
  void rebind(std::shared_ptr<wtp::Provider> provider);
  /// Throws Error(WrongState) when already closed.
  void disconnect();

  SessionState state() const { return state_; }
  std::uint32_t session_id() const { return session_id_; }
  const Headers& negotiated_headers() const { return negotiated_; }
  const WdpAddress& gateway() const { return gateway_; }
  wtp::Provider& provider() { return *provider_; }

 private:
  void apply(SessionEvent event);
  Message exchange(const Message& request);

  std::shared_ptr<wtp::Provider> provider_;
  WdpAddress gateway_;
  SessionState state_ = SessionState::Closed;
  bool ever_connected_ = false;
  std::uint32_t session_id_ = 0;
  Headers negotiated_;
};

/// Connectionless service: a one-byte transaction id, then a WSP message, in
/// a single datagram each way. No retransmission.
class ConnectionlessClient {
 public:
  explicit ConnectionlessClient(std::shared_ptr<DatagramService> service);
  ~ConnectionlessClient();

  /// Throws Error(Timeout) if no matching Reply arrives in time.
  Reply method(const WdpAddress& gateway, PduType method, const std::string& uri,
               const Headers& headers = {}, BytesView body = {},
               Millis timeout = Millis{2000});
  Reply get(const WdpAddress& gateway, const std::string& uri, const Headers& headers = {},
            Millis timeout = Millis{2000}) {
    return method(gateway, PduType::Get, uri, headers, {}, timeout);
  }

  std::uint8_t last_id() const { return last_id_; }

 private:
  std::shared_ptr<DatagramService> service_;
  std::uint8_t next_id_ = 1;
  std::uint8_t last_id_ = 0;
  std::map<std::uint8_t, Reply> replies_;
};

struct Request {
  std::uint32_t session_id = 0;  // 0 for connectionless requests
  std::uint16_t tid = 0;         // WTP tid, or the connectionless id byte
  bool connectionless = false;
  WdpAddress peer;
  PduType method = PduType::Get;
  std::string uri;
  Headers headers;
  Bytes body;
  Headers session_headers;
};

/// Completes a request. May be called from any thread, exactly once.
using Responder = std::function<void(Reply)>;
using RequestHandler = std::function<void(const Request&, Responder)>;

struct RequestRecord {
  std::uint32_t session_id;
  std::uint16_t tid;
  PduType method;
  std::string uri;
  std::uint16_t status;
  Millis duration;
};

struct ServerOptions {
  /// Suspended sessions are evicted after this much idle time.
  Millis session_ttl{300'000};
  /// Returns true for each offered capability header the server accepts.
  std::function<bool(const Header&)> accept_capability = [](const Header&) { return true; };
  std::function<void(const RequestRecord&)> on_request_done;
};

struct ServerSession {
  std::uint32_t id = 0;
  SessionState state = SessionState::Connecting;
  Headers negotiated;
  WdpAddress peer;
  TimerId eviction_timer = 0;
};

/// Session and connectionless service endpoint. Methods are handed to the
/// RequestHandler; the reply goes back as the WTP Result (or a single
/// datagram for connectionless requests).
class Server : public std::enable_shared_from_this<Server> {
 public:
  /// `connectionless` may be null.
  static std::shared_ptr<Server> create(std::shared_ptr<wtp::Provider> sessions,
                                        std::shared_ptr<DatagramService> connectionless,
                                        RequestHandler handler, ServerOptions options = {});
  ~Server();

  std::size_t session_count() const { return sessions_.size(); }
  std::optional<ServerSession> session(std::uint32_t id) const;
  std::uint64_t malformed() const { return malformed_; }
  wtp::Provider& provider() { return *provider_; }

 private:
  Server(std::shared_ptr<wtp::Provider> sessions, std::shared_ptr<DatagramService> connectionless,
         RequestHandler handler, ServerOptions options);
  void install();
  void on_invoke(const wtp::Indication& indication);
  void on_connectionless(const WdpAddress& src, Bytes payload);
  void dispatch(Request request, std::function<void(Reply)> deliver);
  Bytes fit(const Reply& reply, std::size_t budget) const;
  void bind_peer(ServerSession& session, const WdpAddress& peer);
  void close_session(std::uint32_t id);
  ServerSession* by_peer(const WdpAddress& peer);

  std::shared_ptr<wtp::Provider> provider_;
  std::shared_ptr<DatagramService> connectionless_;
  RequestHandler handler_;
  ServerOptions options_;
  std::map<std::uint32_t, ServerSession> sessions_;
  std::unordered_map<WdpAddress, std::uint32_t> peers_;
  std::uint32_t next_session_id_ = 1;
  std::uint64_t malformed_ = 0;
};

}  // namespace wap::wsp

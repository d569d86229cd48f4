#include "wap/wsp.hpp"

#include <atomic>
#include <chrono>

namespace wap::wsp {

namespace {

constexpr std::uint8_t kAbortMalformed = 0x01;

bool is_method(PduType t) { return t == PduType::Get || t == PduType::Post; }

Reply diagnostic(std::uint16_t status, std::string_view text) {
  return Reply{status, {{"Content-Type", "text/plain"}}, to_bytes(text)};
}

}  // namespace

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::Connecting: return "CONNECTING";
    case SessionState::Connected: return "CONNECTED";
    case SessionState::Suspended: return "SUSPENDED";
    case SessionState::Closed: return "CLOSED";
  }
  return "?";
}

std::optional<SessionState> next_state(SessionState from, SessionEvent event) {
  using S = SessionState;
  using E = SessionEvent;
  switch (event) {
    case E::ConnectOk:
      if (from == S::Connecting) return S::Connected;
      break;
    case E::ConnectFailed:
      if (from == S::Connecting) return S::Closed;
      break;
    case E::Suspend:
      if (from == S::Connected) return S::Suspended;
      break;
    case E::ResumeOk:
      if (from == S::Suspended) return S::Connected;
      break;
    case E::ResumeRefused:
      if (from == S::Suspended) return S::Closed;
      break;
    case E::Disconnect:
      if (from != S::Closed) return S::Closed;
      break;
  }
  return std::nullopt;
}

bool legal_transition(SessionState from, SessionState to) {
  using S = SessionState;
  switch (from) {
    case S::Connecting: return to == S::Connected || to == S::Closed;
    case S::Connected: return to == S::Suspended || to == S::Closed;
    case S::Suspended: return to == S::Connected || to == S::Closed;
    case S::Closed: return false;
  }
  return false;
}

std::optional<std::string> Reply::header(std::string_view name) const {
  for (const auto& [n, v] : headers)
    if (n == name) return v;
  return std::nullopt;
}

Message to_message(const Reply& reply) {
  Message m;
  m.type = PduType::Reply;
  m.status = reply.status;
  m.headers = reply.headers;
  m.body = reply.body;
  return m;
}

Reply from_message(const Message& message) { return Reply{message.status, message.headers, message.body}; }

// ---------------------------------------------------------------------------
// Client

Client::Client(std::shared_ptr<wtp::Provider> provider, WdpAddress gateway)
    : provider_(std::move(provider)), gateway_(std::move(gateway)) {}

void Client::apply(SessionEvent event) {
  auto next = next_state(state_, event);
  if (!next) throw Error(Errc::WrongState, std::string(to_string(state_)));
  state_ = *next;
}

Message Client::exchange(const Message& request) {
  auto handle = provider_->invoke(gateway_, wtp::TransactionClass::WithResult, encode(request));
  wtp::Completion c = provider_->wait(handle);
  if (!c.ok()) {
    if (*c.error == Errc::Aborted) throw Error(Errc::MethodAborted, "reason " + std::to_string(c.abort_reason));
    c.check();
  }
  return decode(c.result);
}

void Client::connect(const Headers& capabilities) {
  if (state_ != SessionState::Closed) throw Error(Errc::WrongState, "session already open");
  state_ = SessionState::Connecting;
  Message request{PduType::Connect, 0, 0, {}, capabilities, {}};
  Message reply;
  try {
    reply = exchange(request);
  } catch (const Error& e) {
    apply(SessionEvent::ConnectFailed);
    if (e.code() == Errc::MethodAborted) throw Error(Errc::ConnectRefused, e.what());
    throw;
  }
  if (reply.type != PduType::ConnectReply || reply.session_id == 0) {
    apply(SessionEvent::ConnectFailed);
    throw Error(Errc::ConnectRefused, reply.type == PduType::Reply
                                          ? "status " + std::to_string(reply.status)
                                          : "unexpected " + std::string(to_string(reply.type)));
  }
  session_id_ = reply.session_id;
  negotiated_ = reply.headers;
  apply(SessionEvent::ConnectOk);
}

Reply Client::method(PduType method, const std::string& uri, const Headers& headers, BytesView body) {
  std::optional<Reply> result;
  std::optional<Error> failure;
  bool done = false;
  method_async(method, uri, headers, body, [&](std::optional<Reply> r, std::optional<Error> e) {
    result = std::move(r);
    failure = std::move(e);
    done = true;
  });
  provider_->loop().run_until([&] { return done; }, Millis::max());
  if (failure) throw *failure;
  if (!result) throw Error(Errc::TransactionTimeout, "loop stopped");
  return std::move(*result);
}

void Client::method_async(PduType method, const std::string& uri, const Headers& headers,
                          BytesView body, ReplyFn on_reply) {
  if (!is_method(method)) throw std::invalid_argument("method must be Get or Post");
  if (state_ != SessionState::Connected)
    throw Error(Errc::SessionNotConnected, std::string(to_string(state_)));
  Message request{method, 0, 0, uri, headers, Bytes(body.begin(), body.end())};
  provider_->invoke(gateway_, wtp::TransactionClass::WithResult, encode(request), false,
                    [on_reply = std::move(on_reply)](const wtp::Completion& c) {
                      if (!c.ok()) {
                        if (*c.error == Errc::Aborted)
                          on_reply(std::nullopt, Error(Errc::MethodAborted,
                                                       "reason " + std::to_string(c.abort_reason)));
                        else
                          on_reply(std::nullopt, Error(*c.error, "tid " + std::to_string(c.handle.tid)));
                        return;
                      }
                      try {
                        Message m = decode(c.result);
                        if (m.type != PduType::Reply)
                          throw Error(Errc::MalformedMessage, "expected Reply");
                        on_reply(from_message(m), std::nullopt);
                      } catch (const Error& e) {
                        on_reply(std::nullopt, e);
                      }
                    });
}

void Client::suspend() {
  if (state_ != SessionState::Connected) throw Error(Errc::WrongState, std::string(to_string(state_)));
  Message request{PduType::Suspend, session_id_, 0, {}, {}, {}};
  provider_->invoke(gateway_, wtp::TransactionClass::Unreliable, encode(request));
  apply(SessionEvent::Suspend);
}

void Client::rebind(std::shared_ptr<wtp::Provider> provider) {
  if (state_ != SessionState::Suspended) throw Error(Errc::WrongState, std::string(to_string(state_)));
  provider_ = std::move(provider);
}

void Client::resume() {
  if (state_ != SessionState::Suspended) throw Error(Errc::WrongState, std::string(to_string(state_)));
  Message request{PduType::Resume, session_id_, 0, {}, {}, {}};
  Message reply = exchange(request);
  if (reply.type != PduType::ConnectReply || reply.session_id != session_id_) {
    apply(SessionEvent::ResumeRefused);
    throw Error(Errc::ResumeRefused, "session " + std::to_string(session_id_));
  }
  negotiated_ = reply.headers;
  apply(SessionEvent::ResumeOk);
}

void Client::disconnect() {
  if (state_ == SessionState::Closed) throw Error(Errc::WrongState, "already closed");
  if (state_ != SessionState::Connecting) {
    Message request{PduType::Disconnect, 0, 0, {}, {}, {}};
    provider_->invoke(gateway_, wtp::TransactionClass::Unreliable, encode(request));
  }
  apply(SessionEvent::Disconnect);
}

// ---------------------------------------------------------------------------
// Connectionless client

ConnectionlessClient::ConnectionlessClient(std::shared_ptr<DatagramService> service)
    : service_(std::move(service)) {
  service_->set_receive_handler([this](const WdpAddress&, Bytes payload) {
    if (payload.size() < 2) return;
    try {
      Message m = decode(BytesView(payload).subspan(1));
      if (m.type == PduType::Reply) replies_[payload[0]] = from_message(m);
    } catch (const Error&) {
    }
  });
}

ConnectionlessClient::~ConnectionlessClient() { service_->set_receive_handler(nullptr); }

Reply ConnectionlessClient::method(const WdpAddress& gateway, PduType method, const std::string& uri,
                                   const Headers& headers, BytesView body, Millis timeout) {
  if (!is_method(method)) throw std::invalid_argument("method must be Get or Post");
  const std::uint8_t id = next_id_;
  next_id_ = static_cast<std::uint8_t>(next_id_ + 1);
  last_id_ = id;
  replies_.erase(id);
  Bytes wire{id};
  append(wire, encode(Message{method, 0, 0, uri, headers, Bytes(body.begin(), body.end())}));
  service_->send_to(gateway, wire);
  const bool got = service_->loop().run_until([&] { return replies_.contains(id); }, timeout);
  if (!got) throw Error(Errc::Timeout, "no connectionless reply for id " + std::to_string(id));
  Reply r = std::move(replies_[id]);
  replies_.erase(id);
  return r;
}

// ---------------------------------------------------------------------------
// Server

std::shared_ptr<Server> Server::create(std::shared_ptr<wtp::Provider> sessions,
                                       std::shared_ptr<DatagramService> connectionless,
                                       RequestHandler handler, ServerOptions options) {
  std::shared_ptr<Server> server(
      new Server(std::move(sessions), std::move(connectionless), std::move(handler), std::move(options)));
  server->install();
  return server;
}

Server::Server(std::shared_ptr<wtp::Provider> sessions, std::shared_ptr<DatagramService> connectionless,
               RequestHandler handler, ServerOptions options)
    : provider_(std::move(sessions)),
      connectionless_(std::move(connectionless)),
      handler_(std::move(handler)),
      options_(std::move(options)) {}

Server::~Server() {
  provider_->set_invoke_handler(nullptr);
  if (connectionless_) connectionless_->set_receive_handler(nullptr);
  for (auto& [_, s] : sessions_) provider_->loop().cancel(s.eviction_timer);
}

void Server::install() {
  std::weak_ptr<Server> weak = weak_from_this();
  provider_->set_invoke_handler([weak](const wtp::Indication& ind) {
    if (auto self = weak.lock()) self->on_invoke(ind);
  });
  if (connectionless_) {
    connectionless_->set_receive_handler([weak](const WdpAddress& src, Bytes payload) {
      if (auto self = weak.lock()) self->on_connectionless(src, std::move(payload));
    });
  }
}

std::optional<ServerSession> Server::session(std::uint32_t id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

ServerSession* Server::by_peer(const WdpAddress& peer) {
  auto it = peers_.find(peer);
  if (it == peers_.end()) return nullptr;
  auto s = sessions_.find(it->second);
  return s == sessions_.end() ? nullptr : &s->second;
}

void Server::bind_peer(ServerSession& session, const WdpAddress& peer) {
  if (auto old = peers_.find(session.peer); old != peers_.end() && old->second == session.id)
    peers_.erase(old);
  // A new Connect from the same address replaces whatever session it held.
  if (auto prior = peers_.find(peer); prior != peers_.end() && prior->second != session.id)
    close_session(prior->second);
  session.peer = peer;
  peers_[peer] = session.id;
}

void Server::close_session(std::uint32_t id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return;
  provider_->loop().cancel(it->second.eviction_timer);
  if (auto p = peers_.find(it->second.peer); p != peers_.end() && p->second == id) peers_.erase(p);
  sessions_.erase(it);
}

Bytes Server::fit(const Reply& reply, std::size_t budget) const {
  Bytes wire = encode(to_message(reply));
  if (wire.size() <= budget) return wire;
  return encode(to_message(diagnostic(502, "reply exceeds the bearer budget")));
}

void Server::dispatch(Request request, std::function<void(Reply)> deliver) {
  std::weak_ptr<Server> weak = weak_from_this();
  EventLoop& loop = provider_->loop();
  const auto started = loop.now();
  auto fired = std::make_shared<std::atomic<bool>>(false);
  Responder responder = [weak, &loop, started, fired, deliver = std::move(deliver),
                         session_id = request.session_id, tid = request.tid, method = request.method,
                         uri = request.uri](Reply reply) {
    if (fired->exchange(true)) return;
    loop.post([weak, &loop, started, deliver, reply = std::move(reply), session_id, tid, method, uri] {
      auto self = weak.lock();
      if (!self) return;
      if (self->options_.on_request_done)
        self->options_.on_request_done(
            RequestRecord{session_id, tid, method, uri, reply.status, loop.now() - started});
      deliver(reply);
    });
  };
  if (!handler_) {
    responder(diagnostic(404, "no handler"));
    return;
  }
  handler_(request, std::move(responder));
}

void Server::on_invoke(const wtp::Indication& ind) {
  Message m;
  try {
    m = decode(ind.payload);
  } catch (const Error&) {
    ++malformed_;
    if (ind.tclass != wtp::TransactionClass::Unreliable) provider_->abort(ind.handle, kAbortMalformed);
    return;
  }
  const bool two_way = ind.tclass == wtp::TransactionClass::WithResult;
  auto reply_with = [this, &ind](const Message& msg) { provider_->respond(ind.handle, encode(msg)); };

  switch (m.type) {
    case PduType::Connect: {
      if (!two_way) return;
      ServerSession s;
      s.id = next_session_id_++;
      if (next_session_id_ == 0) next_session_id_ = 1;
      s.state = SessionState::Connecting;
      for (const auto& h : m.headers)
        if (options_.accept_capability(h)) s.negotiated.push_back(h);
      s.state = *next_state(s.state, SessionEvent::ConnectOk);
      auto& stored = sessions_[s.id] = std::move(s);
      bind_peer(stored, ind.handle.peer);
      reply_with(Message{PduType::ConnectReply, stored.id, 0, {}, stored.negotiated, {}});
      return;
    }
    case PduType::Resume: {
      if (!two_way) return;
      auto it = sessions_.find(m.session_id);
      if (it == sessions_.end() || it->second.state == SessionState::Closed) {
        reply_with(to_message(diagnostic(404, "unknown session")));
        return;
      }
      ServerSession& s = it->second;
      // A lost class 0 Suspend leaves the session Connected; resume anyway.
      if (s.state == SessionState::Suspended) s.state = *next_state(s.state, SessionEvent::ResumeOk);
      provider_->loop().cancel(s.eviction_timer);
      s.eviction_timer = 0;
      bind_peer(s, ind.handle.peer);
      reply_with(Message{PduType::ConnectReply, s.id, 0, {}, s.negotiated, {}});
      return;
    }
    case PduType::Suspend: {
      auto it = sessions_.find(m.session_id);
      if (it == sessions_.end() || it->second.peer != ind.handle.peer) return;
      ServerSession& s = it->second;
      auto next = next_state(s.state, SessionEvent::Suspend);
      if (!next) return;
      s.state = *next;
      std::weak_ptr<Server> weak = weak_from_this();
      s.eviction_timer = provider_->loop().schedule(options_.session_ttl, [weak, id = s.id] {
        auto self = weak.lock();
        if (!self) return;
        auto found = self->sessions_.find(id);
        if (found != self->sessions_.end() && found->second.state == SessionState::Suspended)
          self->close_session(id);
      });
      return;
    }
    case PduType::Disconnect: {
      if (ServerSession* s = by_peer(ind.handle.peer)) close_session(s->id);
      return;
    }
    case PduType::Get:
    case PduType::Post: {
      if (!two_way) return;
      ServerSession* s = by_peer(ind.handle.peer);
      if (!s || s->state != SessionState::Connected) {
        reply_with(to_message(diagnostic(400, "no connected session")));
        return;
      }
      Request request{s->id, ind.handle.tid, false, ind.handle.peer, m.type, m.uri,
                      m.headers, m.body, s->negotiated};
      std::weak_ptr<wtp::Provider> provider = provider_;
      const std::size_t budget = provider_->max_payload();
      std::weak_ptr<Server> weak = weak_from_this();
      dispatch(std::move(request), [provider, weak, handle = ind.handle, budget](const Reply& reply) {
        auto p = provider.lock();
        auto self = weak.lock();
        if (!p || !self) return;
        try {
          p->respond(handle, self->fit(reply, budget));
        } catch (const Error&) {
          // The transaction was aborted or timed out while the origin answered.
        }
      });
      return;
    }
    case PduType::ConnectReply:
    case PduType::Reply:
      if (two_way) provider_->abort(ind.handle, kAbortMalformed);
      return;
  }
}

void Server::on_connectionless(const WdpAddress& src, Bytes payload) {
  if (payload.size() < 2) {
    ++malformed_;
    return;
  }
  const std::uint8_t id = payload[0];
  Message m;
  try {
    m = decode(BytesView(payload).subspan(1));
  } catch (const Error&) {
    ++malformed_;
    return;
  }
  if (!is_method(m.type)) {
    ++malformed_;
    return;
  }
  Request request{0, id, true, src, m.type, m.uri, m.headers, m.body, {}};
  std::weak_ptr<DatagramService> service = connectionless_;
  std::weak_ptr<Server> weak = weak_from_this();
  dispatch(std::move(request), [service, weak, src, id](const Reply& reply) {
    auto s = service.lock();
    auto self = weak.lock();
    if (!s || !self) return;
    Bytes wire{id};
    append(wire, self->fit(reply, s->max_payload() - 1));
    try {
      s->send_to(src, wire);
    } catch (const Error&) {
    }
  });
}

}  // namespace wap::wsp

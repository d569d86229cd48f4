#include "wap/wtp.hpp"

#include <sstream>

namespace wap::wtp {

std::string_view to_string(State state) {
  switch (state) {
    case State::Null: return "NULL";
    case State::InvokeSent: return "INVOKE_SENT";
    case State::InvokeRcvd: return "INVOKE_RCVD";
    case State::ResultSent: return "RESULT_SENT";
    case State::ResultRcvd: return "RESULT_RCVD";
    case State::WaitUserAck: return "WAIT_USER_ACK";
    case State::Done: return "DONE";
    case State::Aborted: return "ABORTED";
  }
  return "?";
}

void Completion::check() const {
  if (!error) return;
  if (*error == Errc::Aborted) throw AbortedError(abort_reason);
  throw Error(*error, "tid " + std::to_string(handle.tid));
}

std::string TraceEvent::to_string() const {
  std::ostringstream out;
  out << (direction == Direction::Send ? "tx " : "rx ") << wtp::to_string(type) << " tid=" << tid
      << " rid=" << (rid ? 1 : 0) << " uak=" << (uak ? 1 : 0);
  return out.str();
}

std::shared_ptr<Provider> Provider::create(std::shared_ptr<DatagramService> service,
                                           RetransmissionPolicy policy) {
  std::shared_ptr<Provider> provider(new Provider(std::move(service), policy));
  std::weak_ptr<Provider> weak = provider;
  provider->service_->set_receive_handler([weak](const WdpAddress& src, Bytes payload) {
    if (auto self = weak.lock()) self->on_datagram(src, payload);
  });
  return provider;
}

Provider::Provider(std::shared_ptr<DatagramService> service, RetransmissionPolicy policy)
    : service_(std::move(service)), policy_(policy) {
  if (policy_.retry_interval.count() <= 0 || policy_.max_retrans <= 0 ||
      policy_.ack_delay.count() <= 0 || policy_.result_wait.count() <= 0)
    throw std::invalid_argument("retransmission policy values must be positive");
}

Provider::~Provider() {
  service_->set_receive_handler(nullptr);
  auto cancel_all = [this](std::map<Key, Transaction>& m) {
    for (auto& [_, t] : m) {
      loop().cancel(t.timer);
      loop().cancel(t.linger_timer);
    }
  };
  cancel_all(initiators_);
  cancel_all(responders_);
}

std::size_t Provider::max_payload() const {
  const std::size_t lower = service_->max_payload();
  return lower > 4 ? lower - 4 : 0;
}

Provider::Transaction* Provider::find(const TransactionHandle& h) {
  auto& m = h.role == Role::Initiator ? initiators_ : responders_;
  auto it = m.find(Key{h.peer, h.tid});
  return it == m.end() ? nullptr : &it->second;
}

const Provider::Transaction* Provider::find(const TransactionHandle& h) const {
  const auto& m = h.role == Role::Initiator ? initiators_ : responders_;
  auto it = m.find(Key{h.peer, h.tid});
  return it == m.end() ? nullptr : &it->second;
}

std::optional<State> Provider::state(const TransactionHandle& handle) const {
  if (const Transaction* t = find(handle)) return t->state;
  return std::nullopt;
}

std::uint16_t Provider::allocate_tid() {
  for (int tries = 0; tries < 0xFFFF; ++tries) {
    const std::uint16_t candidate = next_tid_;
    next_tid_ = next_tid_ == 0xFFFF ? 1 : static_cast<std::uint16_t>(next_tid_ + 1);
    if (!live_tids_.contains(candidate)) return candidate;
  }
  throw std::runtime_error("all transaction ids are live");
}

void Provider::trace(TraceEvent::Direction dir, const WdpAddress& peer, const Pdu& pdu) {
  if (trace_) trace_(TraceEvent{dir, loop().now(), peer, pdu.type, pdu.tid, pdu.rid, pdu.uak});
}

void Provider::send_pdu(const WdpAddress& peer, const Pdu& pdu) {
  trace(TraceEvent::Direction::Send, peer, pdu);
  ++stats_.pdus_sent;
  outbox_[peer].push_back(encode(pdu));
  if (!flush_posted_) {
    flush_posted_ = true;
    std::weak_ptr<Provider> weak = weak_from_this();
    loop().post([weak] {
      if (auto self = weak.lock()) self->flush();
    });
  }
}

void Provider::flush() {
  flush_posted_ = false;
  auto outbox = std::move(outbox_);
  outbox_.clear();
  const std::size_t budget = service_->max_payload();
  for (auto& [peer, pdus] : outbox) {
    std::size_t i = 0;
    while (i < pdus.size()) {
      // Greedily pack as many queued PDUs as fit one datagram.
      std::vector<Bytes> batch{std::move(pdus[i++])};
      std::size_t packed = 1 + 2 + batch.front().size();
      while (i < pdus.size() && packed + 2 + pdus[i].size() <= budget) {
        packed += 2 + pdus[i].size();
        batch.push_back(std::move(pdus[i++]));
      }
      const Bytes wire = batch.size() == 1 ? std::move(batch.front()) : concat(batch);
      try {
        service_->send_to(peer, wire);
        ++stats_.datagrams_sent;
      } catch (const Error&) {
        ++stats_.send_failures;
      }
    }
  }
}

void Provider::arm(Transaction& t, Millis delay, void (Provider::*fire)(const TransactionHandle&)) {
  loop().cancel(t.timer);
  std::weak_ptr<Provider> weak = weak_from_this();
  t.timer = loop().schedule(delay, [weak, fire, h = t.handle] {
    if (auto self = weak.lock()) ((*self).*fire)(h);
  });
}

void Provider::disarm(Transaction& t) {
  loop().cancel(t.timer);
  t.timer = 0;
}

void Provider::finish(Transaction& t, State final_state) {
  disarm(t);
  t.state = final_state;
  loop().cancel(t.linger_timer);
  std::weak_ptr<Provider> weak = weak_from_this();
  t.linger_timer = loop().schedule(policy_.linger(), [weak, h = t.handle] {
    auto self = weak.lock();
    if (!self) return;
    auto& m = h.role == Role::Initiator ? self->initiators_ : self->responders_;
    auto it = m.find(Key{h.peer, h.tid});
    if (it == m.end()) return;
    if (h.role == Role::Initiator) {
      auto tid_it = self->live_tids_.find(h.tid);
      if (tid_it != self->live_tids_.end()) self->live_tids_.erase(tid_it);
    }
    m.erase(it);
  });
}

void Provider::complete(Transaction& t, std::optional<Errc> error, std::uint8_t reason) {
  if (t.completed) return;
  t.completed = true;
  const bool has_result = !error && t.tclass == TransactionClass::WithResult;
  Completion c{t.handle, error, reason, has_result ? t.payload : Bytes{}, t.oob};
  if (t.on_complete) {
    // Copy: the callback may start new transactions and rehash the maps.
    auto fn = t.on_complete;
    fn(c);
  } else {
    finished_[t.handle] = std::move(c);
  }
}

TransactionHandle Provider::invoke(const WdpAddress& dst, TransactionClass tclass,
                                   BytesView payload, bool uak, CompletionFn on_complete) {
  if (payload.size() > max_payload())
    throw Error(Errc::OversizeDatagram, std::to_string(payload.size()) + " > " +
                                            std::to_string(max_payload()));
  const std::uint16_t tid = allocate_tid();
  TransactionHandle handle{dst, tid, Role::Initiator};
  Pdu pdu{PduType::Invoke, false, uak, tid, tclass, 0, {}, Bytes(payload.begin(), payload.end())};

  if (tclass == TransactionClass::Unreliable) {
    send_pdu(dst, pdu);
    Completion c{handle, std::nullopt, 0, {}, {}};
    if (on_complete) {
      loop().post([fn = std::move(on_complete), c] { fn(c); });
    } else {
      finished_[handle] = c;
    }
    return handle;
  }

  Transaction& t = initiators_[Key{dst, tid}];
  live_tids_.insert(tid);
  t.handle = handle;
  t.tclass = tclass;
  t.uak = uak;
  t.state = State::InvokeSent;
  t.payload = std::move(pdu.payload);
  t.on_complete = std::move(on_complete);
  pdu.payload = t.payload;
  send_pdu(dst, pdu);
  arm(t, policy_.retry_interval, &Provider::on_invoke_timer);
  return handle;
}

Completion Provider::wait(const TransactionHandle& handle) {
  if (handle.role != Role::Initiator) throw std::invalid_argument("wait() takes an initiator handle");
  loop().run_until([&] { return finished_.contains(handle); }, Millis::max());
  auto it = finished_.find(handle);
  if (it == finished_.end()) throw Error(Errc::TransactionTimeout, "loop stopped");
  Completion c = std::move(it->second);
  finished_.erase(it);
  return c;
}

void Provider::on_invoke_timer(const TransactionHandle& h) {
  Transaction* t = find(h);
  if (!t || t->state != State::InvokeSent || t->acked) return;
  if (t->retransmits >= policy_.max_retrans) {
    finish(*t, State::Aborted);
    complete(*t, Errc::TransactionTimeout);
    return;
  }
  ++t->retransmits;
  send_pdu(h.peer, Pdu{PduType::Invoke, true, t->uak, h.tid, t->tclass, 0, {}, t->payload});
  arm(*t, policy_.retry_interval, &Provider::on_invoke_timer);
}

void Provider::on_result_wait_timer(const TransactionHandle& h) {
  Transaction* t = find(h);
  if (!t || t->state != State::InvokeSent) return;
  finish(*t, State::Aborted);
  complete(*t, Errc::TransactionTimeout);
}

void Provider::on_ack_delay_timer(const TransactionHandle& h) {
  Transaction* t = find(h);
  if (!t || t->state != State::InvokeRcvd || t->acked) return;
  t->acked = true;
  send_pdu(h.peer, Pdu{PduType::Ack, false, false, h.tid, TransactionClass::Unreliable, 0, {}, {}});
}

void Provider::on_result_timer(const TransactionHandle& h) {
  Transaction* t = find(h);
  if (!t || t->state != State::ResultSent) return;
  if (t->retransmits >= policy_.max_retrans) {
    ++stats_.result_timeouts;
    finish(*t, State::Aborted);
    return;
  }
  ++t->retransmits;
  send_pdu(h.peer, Pdu{PduType::Result, true, false, h.tid, TransactionClass::Unreliable, 0, {},
                       t->payload});
  arm(*t, policy_.retry_interval, &Provider::on_result_timer);
}

void Provider::respond(const TransactionHandle& handle, BytesView result) {
  Transaction* t = handle.role == Role::Responder ? find(handle) : nullptr;
  if (!t) throw Error(Errc::UnknownTid, std::to_string(handle.tid));
  if (t->tclass != TransactionClass::WithResult)
    throw Error(Errc::WrongClass, "respond() needs a class 2 transaction");
  if (t->state != State::InvokeRcvd)
    throw Error(Errc::WrongState, std::string(to_string(t->state)));
  if (result.size() > max_payload())
    throw Error(Errc::OversizeDatagram, std::to_string(result.size()) + " > " +
                                            std::to_string(max_payload()));
  disarm(*t);
  t->state = State::ResultSent;
  t->payload.assign(result.begin(), result.end());
  t->retransmits = 0;
  send_pdu(handle.peer, Pdu{PduType::Result, false, false, handle.tid,
                            TransactionClass::Unreliable, 0, {}, t->payload});
  arm(*t, policy_.retry_interval, &Provider::on_result_timer);
}

void Provider::user_ack(const TransactionHandle& handle, BytesView oob) {
  Transaction* t = handle.role == Role::Responder ? find(handle) : nullptr;
  if (!t) throw Error(Errc::UnknownTid, std::to_string(handle.tid));
  if (!t->uak) throw Error(Errc::UserAckNotRequested);
  if (oob.size() > kMaxOob) throw std::invalid_argument("out-of-band data over 64 bytes");
  const bool waiting = (t->tclass == TransactionClass::Reliable && t->state == State::WaitUserAck) ||
                       (t->tclass == TransactionClass::WithResult &&
                        t->state == State::InvokeRcvd && !t->user_acked);
  if (!waiting) throw Error(Errc::WrongState, std::string(to_string(t->state)));
  t->user_acked = true;
  t->acked = true;
  t->oob.assign(oob.begin(), oob.end());
  send_pdu(handle.peer,
           Pdu{PduType::Ack, false, false, handle.tid, TransactionClass::Unreliable, 0, t->oob, {}});
  if (t->tclass == TransactionClass::Reliable) finish(*t, State::Done);
}

void Provider::abort(const TransactionHandle& handle, std::uint8_t reason) {
  Transaction* t = find(handle);
  if (!t) throw Error(Errc::UnknownTid, std::to_string(handle.tid));
  if (t->state == State::Done || t->state == State::Aborted) throw Error(Errc::AlreadyCompleted);
  send_pdu(handle.peer, Pdu{PduType::Abort, false, false, handle.tid,
                            TransactionClass::Unreliable, reason, {}, {}});
  finish(*t, State::Aborted);
  if (handle.role == Role::Initiator) complete(*t, Errc::Aborted, reason);
}

void Provider::on_datagram(const WdpAddress& src, BytesView bytes) {
  std::vector<Bytes> parts;
  try {
    parts = split(bytes);
  } catch (const Error&) {
    ++stats_.malformed;
    return;
  }
  for (const auto& part : parts) {
    Pdu pdu;
    try {
      pdu = decode(part);
    } catch (const Error&) {
      ++stats_.malformed;
      continue;
    }
    trace(TraceEvent::Direction::Recv, src, pdu);
    switch (pdu.type) {
      case PduType::Invoke: handle_invoke(src, pdu); break;
      case PduType::Result: handle_result(src, pdu); break;
      case PduType::Ack: handle_ack(src, pdu); break;
      case PduType::Abort: handle_abort(src, pdu); break;
    }
  }
}

void Provider::handle_invoke(const WdpAddress& src, const Pdu& pdu) {
  const TransactionHandle handle{src, pdu.tid, Role::Responder};
  if (Transaction* t = find(handle)) {
    // Duplicate or retransmitted Invoke: answer again, never indicate again.
    const Pdu ack{PduType::Ack, true, false, pdu.tid, TransactionClass::Unreliable, 0, t->oob, {}};
    switch (t->state) {
      case State::Done:
        if (t->tclass == TransactionClass::Reliable) send_pdu(src, ack);
        break;
      case State::InvokeRcvd:
        if (t->acked) send_pdu(src, ack);
        break;
      case State::ResultSent:
        send_pdu(src, Pdu{PduType::Result, true, false, pdu.tid, TransactionClass::Unreliable, 0,
                          {}, t->payload});
        arm(*t, policy_.retry_interval, &Provider::on_result_timer);
        break;
      default: break;
    }
    return;
  }

  const Indication indication{handle, pdu.tclass, pdu.uak, pdu.payload};
  if (pdu.tclass == TransactionClass::Unreliable) {
    if (on_invoke_) on_invoke_(indication);
    return;
  }

  Transaction& t = responders_[Key{src, pdu.tid}];
  t.handle = handle;
  t.tclass = pdu.tclass;
  t.uak = pdu.uak;
  if (pdu.tclass == TransactionClass::Reliable) {
    t.state = pdu.uak ? State::WaitUserAck : State::InvokeRcvd;
    if (on_invoke_) on_invoke_(indication);
    if (!pdu.uak) {
      Transaction* live = find(handle);
      if (live && live->state == State::InvokeRcvd) {
        live->acked = true;
        send_pdu(src, Pdu{PduType::Ack, false, false, pdu.tid, TransactionClass::Unreliable, 0, {}, {}});
        finish(*live, State::Done);
      }
    }
    return;
  }

  t.state = State::InvokeRcvd;
  if (!pdu.uak) arm(t, policy_.ack_delay, &Provider::on_ack_delay_timer);
  if (on_invoke_) on_invoke_(indication);
}

void Provider::handle_result(const WdpAddress& src, const Pdu& pdu) {
  Transaction* t = find(TransactionHandle{src, pdu.tid, Role::Initiator});
  if (!t || t->tclass != TransactionClass::WithResult) return;
  const Pdu ack{PduType::Ack, false, false, pdu.tid, TransactionClass::Unreliable, 0, {}, {}};
  if (t->state == State::InvokeSent) {
    disarm(*t);
    t->state = State::ResultRcvd;
    t->payload = pdu.payload;
    complete(*t, std::nullopt);
    // complete() may have run user code that touched the maps.
    t = find(TransactionHandle{src, pdu.tid, Role::Initiator});
    if (!t) return;
    send_pdu(src, ack);
    finish(*t, State::Done);
  } else if (t->state == State::Done) {
    Pdu again = ack;
    again.rid = true;
    send_pdu(src, again);
  }
}

void Provider::handle_ack(const WdpAddress& src, const Pdu& pdu) {
  if (Transaction* r = find(TransactionHandle{src, pdu.tid, Role::Responder});
      r && r->state == State::ResultSent) {
    finish(*r, State::Done);
    return;
  }
  Transaction* t = find(TransactionHandle{src, pdu.tid, Role::Initiator});
  if (!t || t->state != State::InvokeSent) return;
  if (t->tclass == TransactionClass::Reliable) {
    t->oob = pdu.oob;
    finish(*t, State::Done);
    complete(*t, std::nullopt);
  } else if (!t->acked) {
    t->acked = true;
    t->oob = pdu.oob;
    arm(*t, policy_.result_wait, &Provider::on_result_wait_timer);
  }
}

void Provider::handle_abort(const WdpAddress& src, const Pdu& pdu) {
  if (Transaction* t = find(TransactionHandle{src, pdu.tid, Role::Initiator});
      t && t->state != State::Done && t->state != State::Aborted) {
    finish(*t, State::Aborted);
    complete(*t, Errc::Aborted, pdu.abort_reason);
    return;
  }
  if (Transaction* r = find(TransactionHandle{src, pdu.tid, Role::Responder});
      r && r->state != State::Done && r->state != State::Aborted) {
    finish(*r, State::Aborted);
    if (on_abort_) on_abort_(r->handle, pdu.abort_reason);
  }
}

std::size_t Provider::active_transactions() const {
  std::size_t n = 0;
  for (const auto* table : {&initiators_, &responders_})
    for (const auto& [_, t] : *table)
      if (t.state != State::Done && t.state != State::Aborted) ++n;
  return n;
}

}  // namespace wap::wtp

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "wap/datagram_service.hpp"
#include "wap/error.hpp"
#include "wap/wtp_pdu.hpp"

namespace wap::wtp {

struct RetransmissionPolicy {
  Millis retry_interval{300};
  int max_retrans = 8;
  /// A class 2 responder that has not answered within this window sends a
  /// standalone Ack; an earlier Result acknowledges the Invoke implicitly.
  Millis ack_delay{100};
  /// How long a class 2 initiator waits for the Result once its Invoke is
  /// acknowledged.
  Millis result_wait{30000};

  /// Finished transactions are remembered this long so duplicates can be
  /// answered without a second indication.
  Millis linger() const { return retry_interval * (max_retrans + 2); }
};

enum class Role { Initiator, Responder };

enum class State {
  Null,
  InvokeSent,
  InvokeRcvd,
  ResultSent,
  ResultRcvd,
  WaitUserAck,
  Done,
  Aborted,
};

std::string_view to_string(State state);

struct TransactionHandle {
  WdpAddress peer;
  std::uint16_t tid = 0;
  Role role = Role::Initiator;

  auto operator<=>(const TransactionHandle&) const = default;
};

struct Completion {
  TransactionHandle handle;
  /// Unset on success; TransactionTimeout or Aborted otherwise.
  std::optional<Errc> error;
  std::uint8_t abort_reason = 0;
  Bytes result;
  Bytes oob;

  bool ok() const { return !error.has_value(); }
  /// Throws the matching wap::Error when !ok().
  void check() const;
};

struct Indication {
  TransactionHandle handle;
  TransactionClass tclass;
  bool uak;
  Bytes payload;
};

struct TraceEvent {
  enum class Direction { Send, Recv };
  Direction direction;
  Millis at;
  WdpAddress peer;
  PduType type;
  std::uint16_t tid;
  bool rid;
  bool uak;

  /// `tx Invoke tid=1 rid=0 uak=0`
  std::string to_string() const;
};

struct ProviderStats {
  std::uint64_t malformed = 0;
  std::uint64_t datagrams_sent = 0;
  std::uint64_t pdus_sent = 0;
  std::uint64_t send_failures = 0;
  std::uint64_t result_timeouts = 0;
};

/// Transaction provider over a DatagramService. Event driven: arrivals,
/// timers and user calls all run on the service's loop thread, and every
/// public member must be called from there. PDUs queued for one peer within a
/// single loop turn leave as one concatenated datagram when they fit.
class Provider : public std::enable_shared_from_this<Provider> {
 public:
  using CompletionFn = std::function<void(const Completion&)>;
  using InvokeFn = std::function<void(const Indication&)>;
  using AbortFn = std::function<void(const TransactionHandle&, std::uint8_t reason)>;
  using TraceFn = std::function<void(const TraceEvent&)>;

  static std::shared_ptr<Provider> create(std::shared_ptr<DatagramService> service,
                                          RetransmissionPolicy policy = {});
  ~Provider();

  /// Starts an initiator transaction. Without `on_complete` the outcome is
  /// kept for wait(). Throws Error(OversizeDatagram).
  TransactionHandle invoke(const WdpAddress& dst, TransactionClass tclass, BytesView payload,
                           bool uak = false, CompletionFn on_complete = {});
  /// Drives the loop until the transaction completes.
  Completion wait(const TransactionHandle& handle);

  /// Throws Error(UnknownTid | WrongClass | WrongState).
  void respond(const TransactionHandle& handle, BytesView result);
  /// Throws Error(UnknownTid | UserAckNotRequested | WrongState).
  void user_ack(const TransactionHandle& handle, BytesView oob = {});
  /// Throws Error(UnknownTid | AlreadyCompleted).
  void abort(const TransactionHandle& handle, std::uint8_t reason);

  void set_invoke_handler(InvokeFn fn) { on_invoke_ = std::move(fn); }
  void set_abort_handler(AbortFn fn) { on_abort_ = std::move(fn); }
  void set_trace(TraceFn fn) { trace_ = std::move(fn); }

  /// Entry point for raw transaction-layer bytes; normally fed by the service.
  void on_datagram(const WdpAddress& src, BytesView bytes);

  std::optional<State> state(const TransactionHandle& handle) const;
  std::size_t live_transactions() const { return initiators_.size() + responders_.size(); }
  /// Live transactions that are not just lingering after completion.
  std::size_t active_transactions() const;
  const ProviderStats& stats() const { return stats_; }
  const RetransmissionPolicy& policy() const { return policy_; }
  /// Largest Invoke/Result payload that fits one datagram.
  std::size_t max_payload() const;
  DatagramService& service() { return *service_; }
  EventLoop& loop() { return service_->loop(); }

 private:
  using Key = std::pair<WdpAddress, std::uint16_t>;

  struct Transaction {
    TransactionHandle handle;
    TransactionClass tclass = TransactionClass::Unreliable;
    bool uak = false;
    State state = State::Null;
    Bytes payload;  // Invoke payload (initiator) or Result payload (responder)
    int retransmits = 0;
    TimerId timer = 0;
    TimerId linger_timer = 0;
    bool acked = false;
    bool user_acked = false;
    bool completed = false;
    Bytes oob;
    CompletionFn on_complete;
  };

  Provider(std::shared_ptr<DatagramService> service, RetransmissionPolicy policy);

  std::uint16_t allocate_tid();
  void send_pdu(const WdpAddress& peer, const Pdu& pdu);
  void flush();
  void trace(TraceEvent::Direction dir, const WdpAddress& peer, const Pdu& pdu);

  void arm(Transaction& t, Millis delay, void (Provider::*fire)(const TransactionHandle&));
  void disarm(Transaction& t);
  void finish(Transaction& t, State final_state);
  void complete(Transaction& t, std::optional<Errc> error, std::uint8_t reason = 0);

  void on_invoke_timer(const TransactionHandle& h);
  void on_result_wait_timer(const TransactionHandle& h);
  void on_ack_delay_timer(const TransactionHandle& h);
  void on_result_timer(const TransactionHandle& h);

  void handle_invoke(const WdpAddress& src, const Pdu& pdu);
  void handle_result(const WdpAddress& src, const Pdu& pdu);
  void handle_ack(const WdpAddress& src, const Pdu& pdu);
  void handle_abort(const WdpAddress& src, const Pdu& pdu);

  Transaction* find(const TransactionHandle& h);
  const Transaction* find(const TransactionHandle& h) const;

  std::shared_ptr<DatagramService> service_;
  RetransmissionPolicy policy_;
  std::map<Key, Transaction> initiators_;
  std::map<Key, Transaction> responders_;
  std::map<TransactionHandle, Completion> finished_;
  std::multiset<std::uint16_t> live_tids_;
  std::uint16_t next_tid_ = 1;

  std::map<WdpAddress, std::vector<Bytes>> outbox_;
  bool flush_posted_ = false;

  InvokeFn on_invoke_;
  AbortFn on_abort_;
  TraceFn trace_;
  ProviderStats stats_;
};

}  // namespace wap::wtp

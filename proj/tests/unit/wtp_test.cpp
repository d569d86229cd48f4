#include <gtest/gtest.h>

#include <map>
#include <random>

#include "harness.hpp"
#include "wap/error.hpp"
#include "wap/wtp.hpp"

using namespace std::chrono_literals;
using namespace wap;
using namespace wap::wtp;

namespace {

struct WtpLab {
  testsupport::Lab lab;
  testsupport::Node inode;
  testsupport::Node rnode;
  std::shared_ptr<Provider> initiator;
  std::shared_ptr<Provider> responder;
  std::vector<Indication> indications;
  WdpAddress r_addr{"R", 9201};

  explicit WtpLab(bearer::ImpairmentProfile ip = {.delay_ms = 10}, bearer::ImpairmentProfile rp = {.delay_ms = 10},
                  RetransmissionPolicy policy = {}) {
    inode = lab.node("I", ip);
    rnode = lab.node("R", rp);
    initiator = Provider::create(inode.wdp->bind(1000), policy);
    responder = Provider::create(rnode.wdp->bind(9201), policy);
    responder->set_invoke_handler([this](const Indication& ind) { indications.push_back(ind); });
  }

  void respond_after(Millis delay, std::string body) {
    responder->set_invoke_handler([this, delay, body](const Indication& ind) {
      indications.push_back(ind);
      lab.loop.schedule(delay, [this, h = ind.handle, body] { responder->respond(h, to_bytes(body)); });
    });
  }
};

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::ConfigError;
}

bearer::FaultScript drop_nth(std::uint64_t n) {
  return [n](const bearer::RawDatagram&, std::uint64_t i) {
    return i == n ? bearer::FaultAction::Drop : bearer::FaultAction::Pass;
  };
}

}  // namespace

// --- Trace oracles. Both bearers add 10 ms; retry 300 ms, ack_delay 100 ms.

TEST(WtpTrace, DropFirstInvoke) {
  WtpLab w;
  testsupport::WtpTrace trace(*w.lab.net);
  w.respond_after(0ms, "r");
  w.inode.bearer->set_fault_script(drop_nth(0));
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  const Completion c = w.initiator->wait(h);
  w.lab.loop.run_for(10s);
  EXPECT_TRUE(c.ok());
  EXPECT_EQ(to_string(c.result), "r");
  EXPECT_EQ(trace.lines(), (std::vector<std::string>{
                               "I>R Invoke tid=1 rid=0 uak=0 DROPPED",
                               "I>R Invoke tid=1 rid=1 uak=0",
                               "R>I Result tid=1 rid=0 uak=0",
                               "I>R Ack tid=1 rid=0 uak=0",
                           }));
  EXPECT_EQ(w.indications.size(), 1u);
}

TEST(WtpTrace, DropFirstResult) {
  WtpLab w;
  testsupport::WtpTrace trace(*w.lab.net);
  w.respond_after(50ms, "r");
  w.rnode.bearer->set_fault_script(drop_nth(0));
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  EXPECT_TRUE(w.initiator->wait(h).ok());
  w.lab.loop.run_for(10s);
  EXPECT_EQ(trace.lines(), (std::vector<std::string>{
                               "I>R Invoke tid=1 rid=0 uak=0",
                               "R>I Result tid=1 rid=0 uak=0 DROPPED",
                               "I>R Invoke tid=1 rid=1 uak=0",
                               "R>I Result tid=1 rid=1 uak=0",
                               "I>R Ack tid=1 rid=0 uak=0",
                           }));
  EXPECT_EQ(w.indications.size(), 1u);
}

TEST(WtpTrace, DuplicateInvokeClass2) {
  WtpLab w;
  testsupport::WtpTrace trace(*w.lab.net);
  w.respond_after(50ms, "r");
  w.inode.bearer->set_fault_script([](const bearer::RawDatagram&, std::uint64_t i) {
    return i == 0 ? bearer::FaultAction::Duplicate : bearer::FaultAction::Pass;
  });
  int completions = 0;
  w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"), false,
                      [&](const Completion& c) { completions += c.ok(); });
  w.lab.loop.run_for(10s);
  EXPECT_EQ(trace.lines(), (std::vector<std::string>{
                               "I>R Invoke tid=1 rid=0 uak=0",
                               "R>I Result tid=1 rid=0 uak=0",
                               "I>R Ack tid=1 rid=0 uak=0",
                           }));
  EXPECT_EQ(w.indications.size(), 1u);
  EXPECT_EQ(completions, 1);
}

TEST(WtpTrace, DuplicateInvokeClass1IsReacknowledged) {
  WtpLab w;
  testsupport::WtpTrace trace(*w.lab.net);
  w.inode.bearer->set_fault_script([](const bearer::RawDatagram&, std::uint64_t i) {
    return i == 0 ? bearer::FaultAction::Duplicate : bearer::FaultAction::Pass;
  });
  int completions = 0;
  w.initiator->invoke(w.r_addr, TransactionClass::Reliable, to_bytes("q"), false,
                      [&](const Completion& c) { completions += c.ok(); });
  w.lab.loop.run_for(10s);
  // Both copies land in one loop turn, so the two Acks share a datagram.
  EXPECT_EQ(trace.lines(), (std::vector<std::string>{
                               "I>R Invoke tid=1 rid=0 uak=0",
                               "R>I Ack tid=1 rid=0 uak=0 + Ack tid=1 rid=1 uak=0",
                           }));
  EXPECT_EQ(w.indications.size(), 1u);
  EXPECT_EQ(completions, 1);
}

TEST(WtpTrace, ResponderSlowerThanAckDelay) {
  WtpLab w;
  testsupport::WtpTrace trace(*w.lab.net);
  w.respond_after(250ms, "r");
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  EXPECT_TRUE(w.initiator->wait(h).ok());
  w.lab.loop.run_for(10s);
  EXPECT_EQ(trace.lines(), (std::vector<std::string>{
                               "I>R Invoke tid=1 rid=0 uak=0",
                               "R>I Ack tid=1 rid=0 uak=0",
                               "R>I Result tid=1 rid=0 uak=0",
                               "I>R Ack tid=1 rid=0 uak=0",
                           }));
}

TEST(WtpTrace, ProviderTraceFormat) {
  WtpLab w;
  std::vector<std::string> lines;
  w.initiator->set_trace([&](const TraceEvent& e) { lines.push_back(e.to_string()); });
  w.initiator->invoke(w.r_addr, TransactionClass::Reliable, to_bytes("x"));
  w.lab.loop.run_for(1s);
  EXPECT_EQ(lines, (std::vector<std::string>{"tx Invoke tid=1 rid=0 uak=0", "rx Ack tid=1 rid=0 uak=0"}));
}

// --- Classes

TEST(Wtp, Class0SendsOnceAndNeverRetransmits) {
  WtpLab w({.loss_prob = 1.0});
  int completions = 0;
  w.initiator->invoke(w.r_addr, TransactionClass::Unreliable, to_bytes("x"), false,
                      [&](const Completion& c) { completions += c.ok(); });
  w.lab.loop.run_for(30s);
  EXPECT_EQ(w.inode.bearer->sent_count(), 1u);
  EXPECT_EQ(completions, 1);
  EXPECT_EQ(w.initiator->live_transactions(), 0u);
}

TEST(Wtp, Class0DeliveredWithoutAck) {
  WtpLab w;
  w.initiator->invoke(w.r_addr, TransactionClass::Unreliable, to_bytes("hi"));
  w.lab.loop.run_for(1s);
  ASSERT_EQ(w.indications.size(), 1u);
  EXPECT_EQ(w.indications[0].tclass, TransactionClass::Unreliable);
  EXPECT_EQ(w.rnode.bearer->sent_count(), 0u);
}

TEST(Wtp, Class1CompletesOnAck) {
  WtpLab w;
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::Reliable, to_bytes("hi"));
  const Completion c = w.initiator->wait(h);
  EXPECT_TRUE(c.ok());
  EXPECT_TRUE(c.result.empty());
  EXPECT_EQ(w.lab.loop.now(), 20ms);
}

TEST(Wtp, Class1UserAckCarriesOutOfBandData) {
  WtpLab w;
  w.responder->set_invoke_handler([&](const Indication& ind) {
    EXPECT_TRUE(ind.uak);
    w.lab.loop.schedule(500ms, [&, h = ind.handle] { w.responder->user_ack(h, to_bytes("receipt")); });
  });
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::Reliable, to_bytes("hi"), true);
  const Completion c = w.initiator->wait(h);
  EXPECT_TRUE(c.ok());
  EXPECT_EQ(to_string(c.oob), "receipt");
}

TEST(Wtp, Class2UserAckThenResult) {
  WtpLab w;
  w.responder->set_invoke_handler([&](const Indication& ind) {
    w.responder->user_ack(ind.handle, to_bytes("seen"));
    EXPECT_EQ(code_of([&] { w.responder->user_ack(ind.handle); }), Errc::WrongState);
    w.lab.loop.schedule(400ms, [&, h = ind.handle] { w.responder->respond(h, to_bytes("done")); });
  });
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"), true);
  const Completion c = w.initiator->wait(h);
  EXPECT_TRUE(c.ok());
  EXPECT_EQ(to_string(c.result), "done");
  EXPECT_EQ(to_string(c.oob), "seen");
}

TEST(Wtp, NoResponderTimesOutAfterMaxRetransmissions) {
  WtpLab w;
  w.rnode.bearer->close();
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  const Completion c = w.initiator->wait(h);
  ASSERT_FALSE(c.ok());
  EXPECT_EQ(*c.error, Errc::TransactionTimeout);
  EXPECT_EQ(code_of([&] { c.check(); }), Errc::TransactionTimeout);
  EXPECT_EQ(w.inode.bearer->sent_count(), 9u);  // original plus MAX_RETRANS
  EXPECT_EQ(w.lab.loop.now(), 2700ms);
}

TEST(Wtp, AckedButNoResultTimesOutAfterResultWait) {
  RetransmissionPolicy p;
  p.result_wait = 5s;
  WtpLab w({.delay_ms = 10}, {.delay_ms = 10}, p);
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  const Completion c = w.initiator->wait(h);
  ASSERT_FALSE(c.ok());
  EXPECT_EQ(*c.error, Errc::TransactionTimeout);
  EXPECT_EQ(w.lab.loop.now(), 120ms + 5s);
}

TEST(Wtp, ResponderGivesUpResultRetransmission) {
  WtpLab w;
  w.respond_after(0ms, "r");
  w.inode.bearer->set_fault_script(
      [](const bearer::RawDatagram&, std::uint64_t i) { return i == 0 ? bearer::FaultAction::Pass : bearer::FaultAction::Drop; });
  w.rnode.bearer->set_fault_script([](const bearer::RawDatagram&, std::uint64_t) { return bearer::FaultAction::Drop; });
  w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  w.lab.loop.run_for(60s);
  EXPECT_EQ(w.responder->stats().result_timeouts, 1u);
  EXPECT_EQ(w.indications.size(), 1u);
}

TEST(Wtp, AbortFromInitiatorReachesResponder) {
  WtpLab w;
  std::vector<std::uint8_t> reasons;
  w.responder->set_abort_handler([&](const TransactionHandle&, std::uint8_t r) { reasons.push_back(r); });
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  w.lab.loop.run_for(50ms);
  w.initiator->abort(h, 7);
  const Completion c = w.initiator->wait(h);
  EXPECT_EQ(*c.error, Errc::Aborted);
  EXPECT_EQ(c.abort_reason, 7);
  w.lab.loop.run_for(50ms);
  EXPECT_EQ(reasons, std::vector<std::uint8_t>{7});
  EXPECT_EQ(code_of([&] { w.initiator->abort(h, 1); }), Errc::AlreadyCompleted);
}

TEST(Wtp, AbortFromResponderCompletesInitiator) {
  WtpLab w;
  w.responder->set_invoke_handler([&](const Indication& ind) { w.responder->abort(ind.handle, 0x11); });
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  const Completion c = w.initiator->wait(h);
  EXPECT_EQ(*c.error, Errc::Aborted);
  EXPECT_EQ(c.abort_reason, 0x11);
}

TEST(Wtp, UserCallErrors) {
  WtpLab w;
  std::optional<TransactionHandle> class1;
  std::optional<TransactionHandle> class2;
  w.responder->set_invoke_handler([&](const Indication& ind) {
    (ind.tclass == TransactionClass::WithResult ? class2 : class1) = ind.handle;
  });
  w.initiator->invoke(w.r_addr, TransactionClass::Reliable, to_bytes("a"), true);
  w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("b"));
  w.lab.loop.run_for(50ms);
  ASSERT_TRUE(class1 && class2);
  EXPECT_EQ(code_of([&] { w.responder->respond({{"R", 1}, 999, Role::Responder}, {}); }), Errc::UnknownTid);
  EXPECT_EQ(code_of([&] { w.responder->respond(*class1, {}); }), Errc::WrongClass);
  EXPECT_EQ(code_of([&] { w.responder->user_ack(*class2); }), Errc::UserAckNotRequested);
  EXPECT_EQ(code_of([&] { w.responder->user_ack({{"R", 1}, 999, Role::Responder}); }), Errc::UnknownTid);
  w.responder->respond(*class2, to_bytes("x"));
  EXPECT_EQ(code_of([&] { w.responder->respond(*class2, to_bytes("y")); }), Errc::WrongState);
  EXPECT_EQ(code_of([&] { w.initiator->invoke(w.r_addr, TransactionClass::WithResult,
                                              Bytes(w.initiator->max_payload() + 1)); }),
            Errc::OversizeDatagram);
  EXPECT_EQ(code_of([&] { w.responder->abort({{"R", 1}, 999, Role::Responder}, 1); }), Errc::UnknownTid);
}

TEST(Wtp, StateQueries) {
  WtpLab w;
  std::optional<TransactionHandle> seen;
  w.responder->set_invoke_handler([&](const Indication& ind) { seen = ind.handle; });
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q"));
  EXPECT_EQ(w.initiator->state(h), State::InvokeSent);
  w.lab.loop.run_for(15ms);
  ASSERT_TRUE(seen);
  EXPECT_EQ(w.responder->state(*seen), State::InvokeRcvd);
  w.responder->respond(*seen, to_bytes("r"));
  EXPECT_EQ(w.responder->state(*seen), State::ResultSent);
  w.lab.loop.run_for(50ms);
  EXPECT_EQ(w.responder->state(*seen), State::Done);
  EXPECT_EQ(w.responder->active_transactions(), 0u);
  w.lab.loop.run_for(10s);
  EXPECT_EQ(w.responder->live_transactions(), 0u);
  EXPECT_EQ(w.initiator->live_transactions(), 0u);
}

TEST(Wtp, TidsAreSequentialAndWrap) {
  WtpLab w;
  std::vector<std::uint16_t> tids;
  for (int i = 0; i < 3; ++i)
    tids.push_back(w.initiator->invoke(w.r_addr, TransactionClass::Unreliable, {}).tid);
  EXPECT_EQ(tids, (std::vector<std::uint16_t>{1, 2, 3}));
  // Hold tid 4 open, then run the counter all the way round.
  auto live = w.initiator->invoke({"nowhere", 1}, TransactionClass::Reliable, {});
  EXPECT_EQ(live.tid, 4);
  for (int i = 5; i <= 65535; ++i) w.initiator->invoke(w.r_addr, TransactionClass::Unreliable, {});
  EXPECT_EQ(w.initiator->invoke(w.r_addr, TransactionClass::Unreliable, {}).tid, 1);
  for (int i = 0; i < 2; ++i) w.initiator->invoke(w.r_addr, TransactionClass::Unreliable, {});
  EXPECT_EQ(w.initiator->invoke(w.r_addr, TransactionClass::Unreliable, {}).tid, 5);
}

TEST(Wtp, ConcurrentTransactionsShareDatagrams) {
  WtpLab w;
  w.respond_after(0ms, "r");
  std::vector<TransactionHandle> hs;
  for (int i = 0; i < 5; ++i) hs.push_back(w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("q")));
  for (auto& h : hs) EXPECT_TRUE(w.initiator->wait(h).ok());
  w.lab.loop.run_for(1s);
  // Five Invokes leave in one datagram, five Results in one, five Acks in one.
  EXPECT_EQ(w.inode.bearer->sent_count(), 2u);
  EXPECT_EQ(w.rnode.bearer->sent_count(), 1u);
  EXPECT_EQ(w.initiator->stats().pdus_sent, 10u);
}

TEST(Wtp, MalformedDatagramsAreCountedNotFatal) {
  WtpLab w;
  auto raw = w.inode.wdp->bind(1001);
  raw->send_to(w.r_addr, from_hex("ff"));
  raw->send_to(w.r_addr, from_hex("00 0005 10"));
  w.lab.loop.run_for(50ms);
  EXPECT_EQ(w.responder->stats().malformed, 2u);
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::Reliable, to_bytes("still fine"));
  EXPECT_TRUE(w.initiator->wait(h).ok());
}

TEST(Wtp, ExactlyOnceUnderHeavyImpairment) {
  const bearer::ImpairmentProfile bad{.loss_prob = 0.3, .dup_prob = 0.2, .reorder_prob = 0.2,
                                      .delay_ms = 5, .jitter_ms = 30, .seed = 99};
  bearer::ImpairmentProfile bad_r = bad;
  bad_r.seed = 100;
  WtpLab w(bad, bad_r);
  std::map<std::uint16_t, int> indicated;
  w.responder->set_invoke_handler([&](const Indication& ind) {
    ++indicated[ind.handle.tid];
    if (ind.tclass == TransactionClass::WithResult) w.responder->respond(ind.handle, ind.payload);
  });
  std::map<std::uint16_t, int> completed;
  int ok = 0;
  std::mt19937 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto cls = rng() % 2 ? TransactionClass::Reliable : TransactionClass::WithResult;
    w.initiator->invoke(w.r_addr, cls, to_bytes("n" + std::to_string(i)), false, [&](const Completion& c) {
      ++completed[c.handle.tid];
      ok += c.ok();
    });
    w.lab.loop.run_for(Millis(rng() % 20));
  }
  w.lab.loop.run_for(120s);
  EXPECT_EQ(completed.size(), 300u);
  for (auto& [tid, n] : indicated) EXPECT_EQ(n, 1) << tid;
  for (auto& [tid, n] : completed) EXPECT_EQ(n, 1) << tid;
  EXPECT_GT(ok, 280);
}

TEST(Wtp, DrivenDirectlyOverWdp) {
  // Transaction layer alone: no WSP above, raw payloads both ways.
  WtpLab w;
  w.respond_after(0ms, "pong");
  auto h = w.initiator->invoke(w.r_addr, TransactionClass::WithResult, to_bytes("ping"));
  const Completion c = w.initiator->wait(h);
  EXPECT_EQ(to_string(c.result), "pong");
  ASSERT_EQ(w.indications.size(), 1u);
  EXPECT_EQ(to_string(w.indications[0].payload), "ping");
}

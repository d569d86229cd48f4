#include <gtest/gtest.h>

#include <map>

#include "harness.hpp"
#include "wap/error.hpp"
#include "wap/sim_bearer.hpp"
#include "wap/udp_bearer.hpp"

using namespace std::chrono_literals;
using namespace wap;
using bearer::ImpairmentProfile;
using bearer::RawDatagram;

namespace {

RawDatagram to(const std::string& dst, std::uint32_t n) {
  Bytes p;
  put_u32(p, n);
  return RawDatagram{"", dst, p};
}

std::vector<std::uint32_t> drain(bearer::Bearer& b) {
  std::vector<std::uint32_t> out;
  while (auto d = b.try_recv()) out.push_back(get_u32(d->payload, 0));
  return out;
}

}  // namespace

TEST(ImpairmentProfile, RejectsOutOfRange) {
  EXPECT_NO_THROW(ImpairmentProfile{}.validate());
  for (auto bad : {ImpairmentProfile{.loss_prob = -0.1}, ImpairmentProfile{.loss_prob = 1.5},
                   ImpairmentProfile{.dup_prob = 2}, ImpairmentProfile{.reorder_prob = -1},
                   ImpairmentProfile{.mtu_bytes = 63}}) {
    try {
      bad.validate();
      ADD_FAILURE() << "accepted invalid profile";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidProfile);
    }
  }
  EXPECT_NO_THROW((ImpairmentProfile{.loss_prob = 1.0, .mtu_bytes = 64}.validate()));
}

TEST(SimBearer, LosslessDeliversInOrder) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a");
  auto b = lab.net->attach("b");
  for (std::uint32_t i = 0; i < 50; ++i) a->send(to("b", i));
  lab.loop.run_for(10ms);
  auto got = drain(*b);
  ASSERT_EQ(got.size(), 50u);
  for (std::uint32_t i = 0; i < 50; ++i) EXPECT_EQ(got[i], i);
}

TEST(SimBearer, SourceAddressIsStamped) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a");
  auto b = lab.net->attach("b");
  a->send(RawDatagram{"forged", "b", {1}});
  auto d = b->recv(10ms);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->src, "a");
}

TEST(SimBearer, MtuBoundary) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a", {.mtu_bytes = 64});
  lab.net->attach("b");
  EXPECT_NO_THROW(a->send(RawDatagram{"", "b", Bytes(64)}));
  try {
    a->send(RawDatagram{"", "b", Bytes(65)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OversizeDatagram);
  }
}

TEST(SimBearer, SendAfterCloseFails) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a");
  a->close();
  try {
    a->send(to("b", 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BearerClosed);
  }
}

TEST(SimBearer, TotalLossDeliversNothing) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a", {.loss_prob = 1.0});
  auto b = lab.net->attach("b");
  for (std::uint32_t i = 0; i < 100; ++i) a->send(to("b", i));
  lab.loop.run_for(100ms);
  EXPECT_TRUE(drain(*b).empty());
  EXPECT_EQ(a->sent_count(), 100u);
}

TEST(SimBearer, LossRateWithinBinomialBound) {
  // n = 10000, p = 0.5: mean 5000, sd 50, so [4700, 5300] is a 6-sigma band.
  testsupport::Lab lab;
  auto a = lab.net->attach("a", {.loss_prob = 0.5, .seed = 7});
  auto b = lab.net->attach("b");
  for (std::uint32_t i = 0; i < 10000; ++i) a->send(to("b", i));
  lab.loop.run_for(10ms);
  const auto delivered = drain(*b).size();
  EXPECT_GE(delivered, 4700u);
  EXPECT_LE(delivered, 5300u);
}

TEST(SimBearer, DuplicationAddsExactlyOneCopy) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a", {.dup_prob = 1.0});
  auto b = lab.net->attach("b");
  for (std::uint32_t i = 0; i < 10; ++i) a->send(to("b", i));
  lab.loop.run_for(10ms);
  std::map<std::uint32_t, int> counts;
  for (auto v : drain(*b)) ++counts[v];
  ASSERT_EQ(counts.size(), 10u);
  for (auto& [v, c] : counts) EXPECT_EQ(c, 2) << v;
}

TEST(SimBearer, ReorderSwapsWithSuccessor) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a");
  auto b = lab.net->attach("b");
  a->set_impairments({.reorder_prob = 1.0});
  a->send(to("b", 1));
  a->set_impairments({});
  a->send(to("b", 2));
  a->send(to("b", 3));
  lab.loop.run_for(10ms);
  EXPECT_EQ(drain(*b), (std::vector<std::uint32_t>{2, 1, 3}));
}

TEST(SimBearer, ReorderedDatagramWithoutSuccessorStillArrives) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a", {.reorder_prob = 1.0});
  auto b = lab.net->attach("b");
  a->send(to("b", 9));
  lab.loop.run_for(49ms);
  EXPECT_TRUE(drain(*b).empty());
  lab.loop.run_for(2ms);
  EXPECT_EQ(drain(*b), std::vector<std::uint32_t>{9});
}

TEST(SimBearer, DelayAndJitterBounds) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a", {.delay_ms = 20, .jitter_ms = 10, .seed = 3});
  auto b = lab.net->attach("b");
  std::vector<long> arrivals;
  b->set_handler([&](RawDatagram) { arrivals.push_back(lab.loop.now().count()); });
  for (std::uint32_t i = 0; i < 200; ++i) a->send(to("b", i));
  lab.loop.run_for(100ms);
  ASSERT_EQ(arrivals.size(), 200u);
  for (long t : arrivals) {
    EXPECT_GE(t, 20);
    EXPECT_LE(t, 30);
  }
}

TEST(SimBearer, SameSeedSameTrace) {
  auto run = [](std::uint64_t seed) {
    testsupport::Lab lab;
    auto a = lab.net->attach(
        "a", {.loss_prob = 0.3, .dup_prob = 0.2, .reorder_prob = 0.2, .delay_ms = 5, .jitter_ms = 20, .seed = seed});
    auto b = lab.net->attach("b");
    std::vector<std::pair<long, std::uint32_t>> trace;
    b->set_handler([&](RawDatagram d) { trace.emplace_back(lab.loop.now().count(), get_u32(d.payload, 0)); });
    for (std::uint32_t i = 0; i < 500; ++i) a->send(to("b", i));
    lab.loop.run_for(1000ms);
    return trace;
  };
  EXPECT_EQ(run(42), run(42));
  EXPECT_NE(run(42), run(43));
}

TEST(SimBearer, FaultScriptDropsAndDuplicatesByIndex) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a");
  auto b = lab.net->attach("b");
  a->set_fault_script([](const RawDatagram&, std::uint64_t i) {
    return i == 0 ? bearer::FaultAction::Drop : i == 2 ? bearer::FaultAction::Duplicate : bearer::FaultAction::Pass;
  });
  for (std::uint32_t i = 0; i < 4; ++i) a->send(to("b", i));
  lab.loop.run_for(10ms);
  EXPECT_EQ(drain(*b), (std::vector<std::uint32_t>{1, 2, 2, 3}));
}

TEST(SimBearer, UnknownDestinationIsDropped) {
  testsupport::Lab lab;
  auto a = lab.net->attach("a");
  int dropped = 0;
  lab.net->set_tap([&](const bearer::TapEvent& e) { dropped += e.kind == bearer::TapEvent::Kind::Dropped; });
  a->send(to("nowhere", 1));
  lab.loop.run_for(10ms);
  EXPECT_EQ(dropped, 1);
}

TEST(UdpBearer, LoopbackRoundTrip) {
  EventLoop loop(EventLoop::Clock::Realtime);
  auto a = std::make_shared<bearer::UdpBearer>(loop, "127.0.0.1:0");
  auto b = std::make_shared<bearer::UdpBearer>(loop, "127.0.0.1:0");
  EXPECT_NE(a->address(), b->address());
  a->send(RawDatagram{"", b->address(), to_bytes("hello")});
  auto d = b->recv(2000ms);
  ASSERT_TRUE(d);
  EXPECT_EQ(to_string(d->payload), "hello");
  EXPECT_EQ(d->src, a->address());
}

TEST(UdpBearer, RejectsImpairmentsAndBadAddresses) {
  EventLoop loop(EventLoop::Clock::Realtime);
  bearer::UdpBearer a(loop, "127.0.0.1:0");
  EXPECT_THROW(a.set_impairments({.loss_prob = 0.1}), Error);
  EXPECT_NO_THROW(a.set_impairments({.mtu_bytes = 512}));
  EXPECT_EQ(a.mtu(), 512u);
  EXPECT_ANY_THROW(bearer::UdpBearer(loop, "not-an-address"));
  EventLoop virtual_loop;
  EXPECT_THROW(bearer::UdpBearer(virtual_loop, "127.0.0.1:0"), std::logic_error);
}

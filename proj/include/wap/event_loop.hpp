#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wap {

using Millis = std::chrono::milliseconds;
using Task = std::function<void()>;
using TimerId = std::uint64_t;

/// Single-threaded event loop shared by every layer of a stack instance.
///
/// Timers and posted tasks run in (deadline, insertion) order, so events that
/// become due at the same instant fire FIFO. Under Clock::Virtual time only
/// moves when the loop is otherwise idle: it jumps straight to the next timer,
/// which makes protocol traces deterministic and fast. Under Clock::Realtime
/// the loop sleeps in poll(2) and can watch file descriptors.
///
/// schedule(), cancel(), post(), now(), stop() and hold() are safe to call from
/// any thread; the run_* functions must only be called from the owning thread.
class EventLoop {
 public:
  enum class Clock { Virtual, Realtime };

  /// Prevents virtual time from advancing while work outside the loop (an
  /// HTTP fetch on a worker thread, say) is still going to post a result.
  class Hold {
   public:
    Hold() = default;
    explicit Hold(EventLoop* loop) : loop_(loop) {}
    Hold(Hold&& other) noexcept : loop_(std::exchange(other.loop_, nullptr)) {}
    Hold& operator=(Hold&& other) noexcept {
      if (this != &other) {
        release();
        loop_ = std::exchange(other.loop_, nullptr);
      }
      return *this;
    }
    Hold(const Hold&) = delete;
    Hold& operator=(const Hold&) = delete;
    ~Hold() { release(); }

    void release();

   private:
    EventLoop* loop_ = nullptr;
  };

  explicit EventLoop(Clock clock = Clock::Virtual);
  ~EventLoop();
  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  Clock clock() const noexcept { return clock_; }
  Millis now() const;

  TimerId schedule(Millis delay, Task task);
  /// Returns false if the timer already fired or was never scheduled.
  bool cancel(TimerId id);
  void post(Task task) { schedule(Millis{0}, std::move(task)); }

  /// Realtime only. `on_readable` runs on the loop thread.
  void watch_fd(int fd, Task on_readable);
  void unwatch_fd(int fd);

  Hold hold();

  /// Runs events until `done()` holds or `timeout` of loop time elapses.
  /// Returns the final value of `done()`.
  bool run_until(const std::function<bool()>& done, Millis timeout);
  void run_for(Millis duration) {
    run_until([] { return false; }, duration);
  }
  /// Runs until stop() is called. A stop() issued before run() makes it return
  /// immediately; the request is consumed either way.
  void run();
  void stop();

  /// Number of timers and posted tasks not yet run.
  std::size_t pending() const;

 private:
  using Key = std::pair<std::int64_t, std::uint64_t>;  // (deadline ms, seq)

  bool run_one_due();
  std::int64_t real_now_ms() const;
  void wake();
  void wait_for_io(std::int64_t wait_ms);

  const Clock clock_;
  const std::chrono::steady_clock::time_point epoch_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::int64_t virtual_now_ = 0;
  std::uint64_t next_seq_ = 1;
  std::map<Key, Task> queue_;
  std::unordered_map<TimerId, Key> index_;
  int holds_ = 0;
  bool stop_requested_ = false;

  int wake_fd_ = -1;
  std::unordered_map<int, Task> fds_;
};

}  // namespace wap

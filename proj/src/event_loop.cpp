#include "wap/event_loop.hpp"

#include <poll.h>
#include <sys/eventfd.h>
#include <unistd.h>

#include <limits>
#include <stdexcept>

namespace wap {

void EventLoop::Hold::release() {
  if (loop_ == nullptr) return;
  {
    std::lock_guard lock(loop_->mu_);
    --loop_->holds_;
  }
  loop_->cv_.notify_all();
  loop_->wake();
  loop_ = nullptr;
}

EventLoop::EventLoop(Clock clock) : clock_(clock), epoch_(std::chrono::steady_clock::now()) {
  if (clock_ == Clock::Realtime) {
    wake_fd_ = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
    if (wake_fd_ < 0) throw std::runtime_error("eventfd failed");
  }
}

EventLoop::~EventLoop() {
  if (wake_fd_ >= 0) ::close(wake_fd_);
}

std::int64_t EventLoop::real_now_ms() const {
  return std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - epoch_).count();
}

Millis EventLoop::now() const {
  if (clock_ == Clock::Realtime) return Millis{real_now_ms()};
  std::lock_guard lock(mu_);
  return Millis{virtual_now_};
}

TimerId EventLoop::schedule(Millis delay, Task task) {
  TimerId id;
  {
    std::lock_guard lock(mu_);
    const std::int64_t base = clock_ == Clock::Realtime ? real_now_ms() : virtual_now_;
    id = next_seq_++;
    Key key{base + std::max<std::int64_t>(0, delay.count()), id};
    queue_.emplace(key, std::move(task));
    index_.emplace(id, key);
  }
  cv_.notify_all();
  wake();
  return id;
}

bool EventLoop::cancel(TimerId id) {
  std::lock_guard lock(mu_);
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  queue_.erase(it->second);
  index_.erase(it);
  return true;
}

void EventLoop::watch_fd(int fd, Task on_readable) {
  if (clock_ != Clock::Realtime) throw std::logic_error("watch_fd requires a realtime loop");
  std::lock_guard lock(mu_);
  fds_[fd] = std::move(on_readable);
}

void EventLoop::unwatch_fd(int fd) {
  std::lock_guard lock(mu_);
  fds_.erase(fd);
}

EventLoop::Hold EventLoop::hold() {
  std::lock_guard lock(mu_);
  ++holds_;
  return Hold(this);
}

std::size_t EventLoop::pending() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

void EventLoop::stop() {
  {
    std::lock_guard lock(mu_);
    stop_requested_ = true;
  }
  cv_.notify_all();
  wake();
}

void EventLoop::wake() {
  if (wake_fd_ < 0) return;
  std::uint64_t one = 1;
  [[maybe_unused]] auto n = ::write(wake_fd_, &one, sizeof one);
}

bool EventLoop::run_one_due() {
  Task task;
  {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return false;
    auto it = queue_.begin();
    const std::int64_t now_ms = clock_ == Clock::Realtime ? real_now_ms() : virtual_now_;
    if (it->first.first > now_ms) return false;
    task = std::move(it->second);
    index_.erase(it->first.second);
    queue_.erase(it);
  }
  task();
  return true;
}

void EventLoop::wait_for_io(std::int64_t wait_ms) {
  std::vector<pollfd> pfds;
  std::vector<int> order;
  {
    std::lock_guard lock(mu_);
    pfds.push_back({wake_fd_, POLLIN, 0});
    for (const auto& [fd, _] : fds_) {
      pfds.push_back({fd, POLLIN, 0});
      order.push_back(fd);
    }
  }
  const int timeout = static_cast<int>(std::min<std::int64_t>(wait_ms, std::numeric_limits<int>::max()));
  if (::poll(pfds.data(), pfds.size(), timeout) <= 0) return;
  if (pfds[0].revents & POLLIN) {
    std::uint64_t drained;
    while (::read(wake_fd_, &drained, sizeof drained) > 0) {
    }
  }
  for (std::size_t i = 1; i < pfds.size(); ++i) {
    if (!(pfds[i].revents & (POLLIN | POLLERR | POLLHUP))) continue;
    Task handler;
    {
      std::lock_guard lock(mu_);
      auto it = fds_.find(order[i - 1]);
      if (it == fds_.end()) continue;
      handler = it->second;
    }
    handler();
  }
}

bool EventLoop::run_until(const std::function<bool()>& done, Millis timeout) {
  const bool forever = timeout == Millis::max();
  std::int64_t deadline;
  {
    std::lock_guard lock(mu_);
    const std::int64_t base = clock_ == Clock::Realtime ? real_now_ms() : virtual_now_;
    deadline = forever ? std::numeric_limits<std::int64_t>::max() : base + timeout.count();
  }

  while (true) {
    if (done()) return true;
    if (run_one_due()) continue;

    if (clock_ == Clock::Realtime) {
      std::int64_t next = deadline;
      {
        std::lock_guard lock(mu_);
        if (!queue_.empty()) next = std::min(next, queue_.begin()->first.first);
      }
      const std::int64_t now_ms = real_now_ms();
      if (now_ms >= deadline) return done();
      wait_for_io(std::max<std::int64_t>(0, next - now_ms));
      continue;
    }

    std::unique_lock lock(mu_);
    if (holds_ > 0) {
      // Something outside the loop will post; wait for it in real time.
      const auto seq_before = next_seq_;
      cv_.wait(lock, [&] { return holds_ == 0 || next_seq_ != seq_before || stop_requested_; });
      continue;
    }
    if (!queue_.empty() && queue_.begin()->first.first <= deadline) {
      virtual_now_ = std::max(virtual_now_, queue_.begin()->first.first);
      continue;
    }
    if (!forever) virtual_now_ = std::max(virtual_now_, deadline);
    lock.unlock();
    if (forever) {
      // Idle with nothing scheduled: only another thread can make progress.
      std::unique_lock wait_lock(mu_);
      const auto seq_before = next_seq_;
      cv_.wait(wait_lock, [&] { return next_seq_ != seq_before || stop_requested_ || holds_ > 0; });
      continue;
    }
    return done();
  }
}

void EventLoop::run() {
  run_until(
      [this] {
        std::lock_guard lock(mu_);
        return stop_requested_;
      },
      Millis::max());
  std::lock_guard lock(mu_);
  stop_requested_ = false;
}

}  // namespace wap

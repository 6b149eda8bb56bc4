#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

// Register-and-dispatch messaging: notifiers broadcast immutable shared
// payloads to observers, observers push them into dispatch queues, and one
// core thread per module drains its queues.

namespace lgslam::runtime {

template <class T>
struct Message {
  std::shared_ptr<const T> payload;
  std::uint64_t sequence_id = 0;
  double timestamp = 0.0;
};

/// Counts work that has been enqueued but not yet fully handled, so a
/// driver can wait until the whole graph of modules has gone idle.
class Quiescence {
 public:
  void begin() {
    std::lock_guard lock(mutex_);
    ++pending_;
  }
  void end() {
    std::lock_guard lock(mutex_);
    if (--pending_ == 0) idle_.notify_all();
  }
  void wait_idle() {
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [&] { return pending_ == 0; });
  }
  std::size_t pending() const {
    std::lock_guard lock(mutex_);
    return pending_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable idle_;
  std::size_t pending_ = 0;
};

enum class OverflowPolicy { Reject, DropOldest };

class Core;

/// FIFO buffer feeding a Core. Capacity 0 means unbounded.
template <class T>
class DispatchQueue {
 public:
  DispatchQueue(std::size_t capacity, OverflowPolicy policy) : capacity_(capacity), policy_(policy) {}

  /// False only when the queue is bounded, full and rejecting.
  bool enqueue(Message<T> msg);

  std::optional<Message<T>> try_dequeue();
  std::size_t size() const;
  std::size_t dropped() const { return dropped_.load(); }
  std::size_t rejected() const { return rejected_.load(); }
  std::size_t capacity() const { return capacity_; }

 private:
  friend class Core;

  std::size_t capacity_;
  OverflowPolicy policy_;
  mutable std::mutex mutex_;
  std::deque<Message<T>> buffer_;
  std::atomic<std::size_t> dropped_{0};
  std::atomic<std::size_t> rejected_{0};
  Core* core_ = nullptr;
  Quiescence* quiescence_ = nullptr;
  std::function<void(const Message<T>&)> on_drop_;
};

/// One worker thread serving any number of queues, taking one message per
/// non-empty queue in round-robin order. Handler exceptions are logged and
/// the worker continues.
class Core {
 public:
  explicit Core(std::string name, Quiescence* quiescence = nullptr)
      : name_(std::move(name)), quiescence_(quiescence) {}
  ~Core() { stop(true); }
  Core(const Core&) = delete;
  Core& operator=(const Core&) = delete;

  template <class T>
  std::shared_ptr<DispatchQueue<T>> add_queue(std::function<void(const Message<T>&)> handler,
                                              std::size_t capacity = 0,
                                              OverflowPolicy policy = OverflowPolicy::Reject) {
    auto queue = std::make_shared<DispatchQueue<T>>(capacity, policy);
    queue->core_ = this;
    queue->quiescence_ = quiescence_;
    std::lock_guard lock(mutex_);
    slots_.push_back(Slot{
        [queue, handler = std::move(handler)]() -> std::optional<std::function<void()>> {
          auto msg = queue->try_dequeue();
          if (!msg) return std::nullopt;
          return [handler, m = std::move(*msg)] { handler(m); };
        },
        [queue] { return queue->size() > 0; }});
    return queue;
  }

  void start() {
    std::lock_guard lock(mutex_);
    if (thread_.joinable()) return;
    stopping_ = false;
    thread_ = std::thread([this] { run(); });
  }

  /// Stops the worker. With drain, everything already queued is handled first.
  void stop(bool drain = true) {
    {
      std::lock_guard lock(mutex_);
      if (!thread_.joinable()) return;
      stopping_ = true;
      drain_ = drain;
    }
    wake_.notify_all();
    thread_.join();
  }

  void notify() {
    { std::lock_guard lock(mutex_); }
    wake_.notify_all();
  }

  std::size_t handled() const { return handled_.load(); }
  std::size_t failures() const { return failures_.load(); }
  const std::string& name() const { return name_; }

 private:
  struct Slot {
    std::function<std::optional<std::function<void()>>()> take;
    std::function<bool()> has_work;
  };

  bool any_work_locked() const {
    return std::any_of(slots_.begin(), slots_.end(), [](const Slot& s) { return s.has_work(); });
  }

  void run() {
    std::size_t next = 0;
    for (;;) {
      std::optional<std::function<void()>> job;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || any_work_locked(); });
        if (stopping_ && (!drain_ || !any_work_locked())) return;
        for (std::size_t k = 0; k < slots_.size() && !job; ++k) {
          const std::size_t i = (next + k) % slots_.size();
          job = slots_[i].take();
          if (job) next = i + 1;
        }
      }
      if (!job) continue;
      try {
        (*job)();
      } catch (const std::exception& e) {
        ++failures_;
        spdlog::error("{}: handler failed: {}", name_, e.what());
      } catch (...) {
        ++failures_;
        spdlog::error("{}: handler failed with a non-standard exception", name_);
      }
      ++handled_;
      if (quiescence_) quiescence_->end();
    }
  }

  std::string name_;
  Quiescence* quiescence_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::vector<Slot> slots_;
  std::thread thread_;
  bool stopping_ = false;
  bool drain_ = true;
  std::atomic<std::size_t> handled_{0};
  std::atomic<std::size_t> failures_{0};
};

template <class T>
bool DispatchQueue<T>::enqueue(Message<T> msg) {
  {
    std::lock_guard lock(mutex_);
    if (capacity_ > 0 && buffer_.size() >= capacity_) {
      if (policy_ == OverflowPolicy::Reject) {
        ++rejected_;
        return false;
      }
      Message<T> oldest = std::move(buffer_.front());
      buffer_.pop_front();
      ++dropped_;
      if (on_drop_) on_drop_(oldest);
      if (quiescence_) quiescence_->end();
    }
    if (quiescence_) quiescence_->begin();
    buffer_.push_back(std::move(msg));
  }
  if (core_) core_->notify();
  return true;
}

template <class T>
std::optional<Message<T>> DispatchQueue<T>::try_dequeue() {
  std::lock_guard lock(mutex_);
  if (buffer_.empty()) return std::nullopt;
  Message<T> msg = std::move(buffer_.front());
  buffer_.pop_front();
  return msg;
}

template <class T>
std::size_t DispatchQueue<T>::size() const {
  std::lock_guard lock(mutex_);
  return buffer_.size();
}

template <class T>
class Observer {
 public:
  virtual ~Observer() = default;
  virtual void on_message(const Message<T>& msg) = 0;
};

/// Observer that forwards every message into a dispatch queue.
template <class T>
class QueueObserver : public Observer<T> {
 public:
  explicit QueueObserver(std::shared_ptr<DispatchQueue<T>> queue) : queue_(std::move(queue)) {}
  void on_message(const Message<T>& msg) override { queue_->enqueue(msg); }

 private:
  std::shared_ptr<DispatchQueue<T>> queue_;
};

/// Observer that forwards only the messages accepted by a predicate.
template <class T>
class FilteringQueueObserver : public Observer<T> {
 public:
  FilteringQueueObserver(std::shared_ptr<DispatchQueue<T>> queue,
                         std::function<bool(const Message<T>&)> accept)
      : queue_(std::move(queue)), accept_(std::move(accept)) {}
  void on_message(const Message<T>& msg) override {
    if (accept_(msg)) queue_->enqueue(msg);
  }

 private:
  std::shared_ptr<DispatchQueue<T>> queue_;
  std::function<bool(const Message<T>&)> accept_;
};

/// Broadcasts messages to registered observers. Registration of the same
/// observer twice returns the existing id.
template <class T>
class Notifier {
 public:
  using ObserverPtr = std::shared_ptr<Observer<T>>;

  std::uint64_t register_observer(const ObserverPtr& observer) {
    std::lock_guard lock(mutex_);
    for (const auto& [id, obs] : subscribers_) {
      if (obs == observer) return id;
    }
    const std::uint64_t id = next_id_++;
    subscribers_.emplace_back(id, observer);
    return id;
  }

  bool unregister_observer(std::uint64_t id) {
    std::lock_guard lock(mutex_);
    const auto it = std::find_if(subscribers_.begin(), subscribers_.end(),
                                 [&](const auto& s) { return s.first == id; });
    if (it == subscribers_.end()) return false;
    subscribers_.erase(it);
    return true;
  }

  /// Wraps the payload with the next sequence id and delivers it.
  Message<T> publish(std::shared_ptr<const T> payload, double timestamp) {
    Message<T> msg{std::move(payload), next_sequence_.fetch_add(1), timestamp};
    notify(msg);
    return msg;
  }

  /// Delivers to every observer registered at call time; returns the count.
  std::size_t notify(const Message<T>& msg) {
    std::vector<ObserverPtr> targets;
    {
      std::lock_guard lock(mutex_);
      for (const auto& s : subscribers_) targets.push_back(s.second);
    }
    for (const auto& t : targets) t->on_message(msg);
    return targets.size();
  }

  std::size_t subscriber_count() const {
    std::lock_guard lock(mutex_);
    return subscribers_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::pair<std::uint64_t, ObserverPtr>> subscribers_;
  std::uint64_t next_id_ = 1;
  std::atomic<std::uint64_t> next_sequence_{1};
};

/// Registers a queue with a notifier through a QueueObserver.
template <class T>
std::uint64_t connect(Notifier<T>& notifier, std::shared_ptr<DispatchQueue<T>> queue) {
  return notifier.register_observer(std::make_shared<QueueObserver<T>>(std::move(queue)));
}

}  // namespace lgslam::runtime

#include <atomic>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "doctest.h"
#include "lgslam/runtime.hpp"

using namespace lgslam::runtime;

namespace {

struct Item {
  int producer = 0;
  int value = 0;
};

template <class T>
Message<T> make(T value, std::uint64_t seq = 0) {
  return {std::make_shared<const T>(std::move(value)), seq, 0.0};
}

template <class T>
class Recorder : public Observer<T> {
 public:
  void on_message(const Message<T>& msg) override {
    std::lock_guard lock(mutex);
    seen.push_back(msg);
  }
  std::mutex mutex;
  std::vector<Message<T>> seen;
};

}  // namespace

TEST_CASE("queue hands messages to the worker in enqueue order") {
  Quiescence q;
  Core core("fifo", &q);
  std::vector<int> handled;
  auto queue = core.add_queue<int>([&](const Message<int>& m) { handled.push_back(*m.payload); });
  core.start();
  for (int i = 1; i <= 3; ++i) CHECK(queue->enqueue(make(i)));
  q.wait_idle();
  core.stop();
  CHECK(handled == std::vector<int>{1, 2, 3});
}

TEST_CASE("bounded rejecting queue refuses the message past capacity") {
  DispatchQueue<int> queue(2, OverflowPolicy::Reject);
  CHECK(queue.enqueue(make(1)));
  CHECK(queue.enqueue(make(2)));
  CHECK_FALSE(queue.enqueue(make(3)));
  CHECK(queue.rejected() == 1);
  CHECK(queue.size() == 2);
  CHECK(*queue.try_dequeue()->payload == 1);
}

TEST_CASE("drop-oldest queue keeps the newest messages") {
  DispatchQueue<int> queue(2, OverflowPolicy::DropOldest);
  for (int i = 1; i <= 4; ++i) CHECK(queue.enqueue(make(i)));
  CHECK(queue.dropped() == 2);
  CHECK(*queue.try_dequeue()->payload == 3);
  CHECK(*queue.try_dequeue()->payload == 4);
  CHECK_FALSE(queue.try_dequeue());
}

TEST_CASE("two producers: every message arrives and per-producer order holds") {
  Quiescence q;
  Core core("stress", &q);
  std::vector<Item> handled;
  auto queue = core.add_queue<Item>([&](const Message<Item>& m) { handled.push_back(*m.payload); });
  core.start();
  auto produce = [&](int id) {
    for (int i = 0; i < 100; ++i) queue->enqueue(make(Item{id, i}));
  };
  std::thread a(produce, 0), b(produce, 1);
  a.join();
  b.join();
  q.wait_idle();
  core.stop();
  REQUIRE(handled.size() == 200);
  int next[2] = {0, 0};
  for (const Item& it : handled) {
    CHECK(it.value == next[it.producer]);
    ++next[it.producer];
  }
  CHECK(next[0] == 100);
  CHECK(next[1] == 100);
}

TEST_CASE("messages queued before start are all handled") {
  Quiescence q;
  Core core("drain", &q);
  int count = 0;
  auto queue = core.add_queue<int>([&](const Message<int>&) { ++count; });
  for (int i = 0; i < 10; ++i) queue->enqueue(make(i));
  core.start();
  q.wait_idle();
  core.stop();
  CHECK(count == 10);
}

TEST_CASE("a throwing handler does not stop the worker") {
  Quiescence q;
  Core core("faulty", &q);
  std::vector<int> handled;
  auto queue = core.add_queue<int>([&](const Message<int>& m) {
    if (*m.payload == 5) throw std::runtime_error("bad cloud");
    handled.push_back(*m.payload);
  });
  core.start();
  for (int i = 1; i <= 10; ++i) queue->enqueue(make(i));
  q.wait_idle();
  core.stop();
  CHECK(handled == std::vector<int>{1, 2, 3, 4, 6, 7, 8, 9, 10});
  CHECK(core.failures() == 1);
  CHECK(core.handled() == 10);
}

TEST_CASE("stop with drain handles everything still queued") {
  std::atomic<bool> release{false};
  std::vector<int> handled;
  Core core("shutdown");
  auto queue = core.add_queue<int>([&](const Message<int>& m) {
    while (!release.load()) std::this_thread::yield();
    handled.push_back(*m.payload);
  });
  core.start();
  for (int i = 0; i < 4; ++i) queue->enqueue(make(i));
  // First message is in the handler, three are waiting.
  while (queue->size() > 3) std::this_thread::yield();
  std::thread stopper([&] { core.stop(true); });
  release = true;
  stopper.join();
  CHECK(handled == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("round-robin takes one message per queue in turn") {
  Quiescence q;
  Core core("rr", &q);
  std::vector<int> order;
  auto a = core.add_queue<int>([&](const Message<int>& m) { order.push_back(*m.payload); });
  auto b = core.add_queue<int>([&](const Message<int>& m) { order.push_back(*m.payload); });
  for (int i = 0; i < 3; ++i) {
    a->enqueue(make(i));
    b->enqueue(make(10 + i));
  }
  core.start();
  q.wait_idle();
  core.stop();
  CHECK(order == std::vector<int>{0, 10, 1, 11, 2, 12});
}

TEST_CASE("broadcast reaches every subscriber exactly once") {
  Notifier<int> notifier;
  auto a = std::make_shared<Recorder<int>>();
  auto b = std::make_shared<Recorder<int>>();
  notifier.register_observer(a);
  notifier.register_observer(b);
  const Message<int> m = make(7);
  CHECK(notifier.notify(m) == 2);
  CHECK(a->seen.size() == 1);
  CHECK(b->seen.size() == 1);
}

TEST_CASE("registering the same observer twice is idempotent") {
  Notifier<int> notifier;
  auto a = std::make_shared<Recorder<int>>();
  const auto id1 = notifier.register_observer(a);
  const auto id2 = notifier.register_observer(a);
  CHECK(id1 == id2);
  CHECK(notifier.subscriber_count() == 1);
  notifier.notify(make(1));
  CHECK(a->seen.size() == 1);
}

TEST_CASE("unregistered observers receive nothing") {
  Notifier<int> notifier;
  auto a = std::make_shared<Recorder<int>>();
  const auto id = notifier.register_observer(a);
  CHECK(notifier.unregister_observer(id));
  CHECK_FALSE(notifier.unregister_observer(id));
  CHECK(notifier.notify(make(1)) == 0);
  CHECK(a->seen.empty());
}

TEST_CASE("payloads are shared, not copied, across observers and queues") {
  Notifier<std::vector<double>> notifier;
  auto a = std::make_shared<Recorder<std::vector<double>>>();
  auto queue = std::make_shared<DispatchQueue<std::vector<double>>>(0, OverflowPolicy::Reject);
  notifier.register_observer(a);
  connect(notifier, queue);
  auto payload = std::make_shared<const std::vector<double>>(1000, 1.0);
  const auto sent = notifier.publish(payload, 1.5);
  CHECK(a->seen.at(0).payload.get() == payload.get());
  CHECK(queue->try_dequeue()->payload.get() == payload.get());
  CHECK(sent.timestamp == 1.5);
}

TEST_CASE("publish assigns strictly increasing sequence ids") {
  Notifier<int> notifier;
  auto a = std::make_shared<Recorder<int>>();
  notifier.register_observer(a);
  for (int i = 0; i < 5; ++i) notifier.publish(std::make_shared<const int>(i), 0.0);
  for (std::size_t i = 1; i < a->seen.size(); ++i) {
    CHECK(a->seen[i].sequence_id > a->seen[i - 1].sequence_id);
  }
}

TEST_CASE("filtering observer forwards only accepted messages") {
  auto queue = std::make_shared<DispatchQueue<int>>(0, OverflowPolicy::Reject);
  Notifier<int> notifier;
  notifier.register_observer(std::make_shared<FilteringQueueObserver<int>>(
      queue, [](const Message<int>& m) { return *m.payload % 2 == 0; }));
  for (int i = 0; i < 6; ++i) notifier.publish(std::make_shared<const int>(i), 0.0);
  CHECK(queue->size() == 3);
}

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <mutex>
#include <shared_mutex>
#include <thread>
#include <vector>

#include "notesearch/sync.hpp"

using notesearch::WriterPreferringMutex;
using namespace std::chrono_literals;

TEST(WriterPreferringMutex, ExclusiveAndSharedSemantics) {
  WriterPreferringMutex m;
  {
    std::shared_lock a(m);
    std::shared_lock b(m, std::try_to_lock);
    EXPECT_TRUE(b.owns_lock());
    std::unique_lock w(m, std::try_to_lock);
    EXPECT_FALSE(w.owns_lock());
  }
  std::unique_lock w(m);
  std::shared_lock r(m, std::try_to_lock);
  EXPECT_FALSE(r.owns_lock());
}

TEST(WriterPreferringMutex, WriterIsNotStarvedByOverlappingReaders) {
  WriterPreferringMutex m;
  std::atomic<bool> stop{false};
  std::atomic<int> inside{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&] {
      while (!stop.load()) {
        std::shared_lock lock(m);
        ++inside;
        std::this_thread::sleep_for(2ms);
        --inside;
      }
    });
  }
  std::this_thread::sleep_for(20ms);

  const auto start = std::chrono::steady_clock::now();
  int writes = 0;
  while (writes < 20 && std::chrono::steady_clock::now() - start < 10s) {
    std::unique_lock lock(m);
    EXPECT_EQ(inside.load(), 0);
    ++writes;
  }
  stop = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(writes, 20);
}

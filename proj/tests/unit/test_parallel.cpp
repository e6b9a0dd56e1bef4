#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include <cap/parallel.h>

namespace {

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (std::size_t workers : {1u, 2u, 3u, 8u, 100u}) {
    std::vector<std::atomic<int>> hits(37);
    cap::parallel_for(37, [&](std::size_t i) { hits[i]++; }, workers);
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  cap::parallel_for(0, [](std::size_t) { FAIL(); }, 4);
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  for (std::size_t workers : {1u, 4u}) {
    try {
      cap::parallel_for(
          20,
          [](std::size_t i) {
            if (i == 5 || i == 13) throw std::runtime_error("index " + std::to_string(i));
          },
          workers);
      FAIL();
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "index 5");
    }
  }
}

TEST(WorkerCount, HonoursEnvironment) {
  ::setenv("CAP_WORKERS", "3", 1);
  EXPECT_EQ(cap::worker_count(), 3u);
  ::setenv("CAP_WORKERS", "zero", 1);
  EXPECT_GE(cap::worker_count(), 1u);
  ::setenv("CAP_WORKERS", "0", 1);
  EXPECT_GE(cap::worker_count(), 1u);
  ::unsetenv("CAP_WORKERS");
  EXPECT_GE(cap::worker_count(), 1u);
}

}  // namespace

// Copyright 2026 The postsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <atomic>
#include <stdexcept>
#include <string>

#include "postsel/parallel.hpp"

namespace postsel {
namespace {

TEST(ParallelMap, PreservesOrder) {
  for (std::size_t workers : {0u, 1u, 3u, 8u}) {
    const auto out = parallel_map(100, [](std::size_t i) { return i * i; }, workers);
    ASSERT_EQ(out.size(), 100u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], i * i);
  }
  EXPECT_TRUE(parallel_map(0, [](std::size_t i) { return i; }).empty());
}

TEST(ParallelMap, RethrowsLowestFailingIndex) {
  for (std::size_t workers : {1u, 4u}) {
    std::atomic<int> calls{0};
    try {
      parallel_map(
          40,
          [&](std::size_t i) {
            ++calls;
            if (i == 7 || i == 13 || i == 30) throw std::runtime_error(std::to_string(i));
            return i;
          },
          workers);
      FAIL();
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "7");
    }
    if (workers > 1) EXPECT_EQ(calls.load(), 40);
  }
}

}  // namespace
}  // namespace postsel

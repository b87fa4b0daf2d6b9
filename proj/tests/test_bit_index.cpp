#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "sandlab/bit_index.hpp"
#include "sandlab/rng.hpp"

using sandlab::BitIndex;
using sandlab::Rng;

TEST_CASE("basic membership and bounds") {
  BitIndex idx(100);
  CHECK(idx.empty());
  CHECK(!idx.next_geq(0).has_value());
  idx.set(7);
  idx.set(63);
  idx.set(64);
  idx.set(99);
  CHECK(idx.size() == 4);
  CHECK(idx.test(63));
  CHECK(!idx.test(62));
  CHECK(*idx.next_geq(0) == 7);
  CHECK(*idx.next_geq(8) == 63);
  CHECK(*idx.next_geq(64) == 64);
  CHECK(*idx.next_geq(65) == 99);
  CHECK(!idx.next_geq(100).has_value());
  CHECK(*idx.prev_leq(99) == 99);
  CHECK(*idx.prev_leq(98) == 64);
  CHECK(!idx.prev_leq(6).has_value());
  CHECK(*idx.min() == 7);
  CHECK(*idx.max() == 99);
  idx.clear(63);
  CHECK(*idx.next_geq(8) == 64);
  CHECK(idx.size() == 3);
}

TEST_CASE("set/clear idempotence") {
  BitIndex idx(10);
  idx.set(3);
  idx.set(3);
  CHECK(idx.size() == 1);
  idx.clear(3);
  idx.clear(3);
  CHECK(idx.size() == 0);
}

TEST_CASE("agrees with std::set under random operations") {
  for (int cap : {5, 64, 65, 4096, 100000}) {
    BitIndex idx(cap);
    std::set<int> ref;
    Rng rng(42 + cap);
    for (int op = 0; op < 20000; ++op) {
      const int i = rng.below(cap);
      switch (rng.below(3)) {
        case 0:
          idx.set(i);
          ref.insert(i);
          break;
        case 1:
          idx.clear(i);
          ref.erase(i);
          break;
        default: {
          auto got = idx.next_geq(i);
          auto it = ref.lower_bound(i);
          if (it == ref.end())
            CHECK(!got.has_value());
          else
            CHECK(*got == *it);
          auto gotp = idx.prev_leq(i);
          auto itp = ref.upper_bound(i);
          if (itp == ref.begin())
            CHECK(!gotp.has_value());
          else
            CHECK(*gotp == *std::prev(itp));
        }
      }
      REQUIRE(idx.size() == static_cast<int>(ref.size()));
    }
    const auto all = idx.collect();
    CHECK(std::equal(all.begin(), all.end(), ref.begin(), ref.end()));
  }
}

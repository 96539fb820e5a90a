#include "hedit/cache.hpp"
#include "hedit/planted.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <deque>

using namespace hedit;

namespace {

HiddenState filled(Index d, double value) { return Vector::Constant(d, value); }

}  // namespace

TEST(TextCache, EvictsOldestFirst) {
  TextCache c(2, 3);
  c.push(filled(3, 1.0));
  c.push(filled(3, 2.0));
  c.push(filled(3, 3.0));
  const Matrix s = c.snapshot();
  ASSERT_EQ(s.rows(), 2);
  EXPECT_EQ(s(0, 0), 2.0);
  EXPECT_EQ(s(1, 2), 3.0);
  EXPECT_EQ(c.count(), 2);
}

TEST(TextCache, EmptySnapshotHasZeroRows) {
  TextCache c(4, 7);
  EXPECT_TRUE(c.empty());
  const Matrix s = c.snapshot();
  EXPECT_EQ(s.rows(), 0);
  EXPECT_EQ(s.cols(), 7);
}

TEST(TextCache, SnapshotIsAnIndependentCopy) {
  TextCache c(3, 2);
  c.push(filled(2, 1.0));
  const Matrix before = c.snapshot();
  c.push(filled(2, 9.0));
  c.push(filled(2, 9.0));
  c.push(filled(2, 9.0));
  EXPECT_EQ(before.rows(), 1);
  EXPECT_EQ(before(0, 0), 1.0);
}

TEST(TextCache, RejectsBadInput) {
  EXPECT_THROW(TextCache(0, 3), ContractViolation);
  TextCache c(2, 3);
  EXPECT_THROW(c.push(filled(4, 1.0)), ContractViolation);
  HiddenState nan = filled(3, 1.0);
  nan[1] = std::nan("");
  EXPECT_THROW(c.push(nan), ContractViolation);
  EXPECT_TRUE(c.empty());
}

TEST(TextCache, ClearEmpties) {
  TextCache c(2, 1);
  c.push(filled(1, 5.0));
  c.clear();
  EXPECT_TRUE(c.empty());
  c.push(filled(1, 6.0));
  EXPECT_EQ(c.snapshot()(0, 0), 6.0);
}

TEST(TextCache, MatchesReferenceQueueUnderRandomPushes) {
  detail::Sampler s(77);
  const Index cap = 17, d = 3;
  TextCache c(cap, d);
  std::deque<double> ref;
  for (int i = 0; i < 10000; ++i) {
    c.push(filled(d, static_cast<double>(i)));
    ref.push_back(i);
    if (static_cast<Index>(ref.size()) > cap) ref.pop_front();
    if (s.coin(0.02)) {
      const Matrix snap = c.snapshot();
      ASSERT_EQ(snap.rows(), static_cast<Index>(ref.size()));
      for (Index k = 0; k < snap.rows(); ++k) ASSERT_EQ(snap(k, 1), ref[k]);
    }
  }
  EXPECT_EQ(c.count(), cap);
}

TEST(TextCache, PushCostDoesNotGrowWithCapacity) {
  const Index d = 1024;
  const HiddenState h = filled(d, 0.5);
  auto time_pushes = [&](Index cap) {
    TextCache c(cap, d);
    for (Index i = 0; i < cap; ++i) c.push(h);  // warm: full ring
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 4000; ++i) c.push(h);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double small = time_pushes(8);
  const double large = time_pushes(512);
  EXPECT_LE(large, 3.0 * small) << "capacity 8: " << small << " s, capacity 512: " << large << " s";
}

TEST(VisualCache, CapturesOncePerImage) {
  detail::Sampler s(3);
  VisualCache cache;
  EXPECT_FALSE(cache.has_image());
  EXPECT_THROW(cache.features(), ContractViolation);
  cache.capture("img-0", VisualFeatureMatrix(s.gaussian(4, 6)));
  EXPECT_TRUE(cache.has_image());
  EXPECT_EQ(cache.image_id(), "img-0");
  EXPECT_EQ(cache.features().count(), 4);
  EXPECT_THROW(cache.capture("img-1", VisualFeatureMatrix(s.gaussian(4, 6))), ContractViolation);
  EXPECT_EQ(cache.image_id(), "img-0");
}

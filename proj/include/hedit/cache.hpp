#pragma once

// Per-image visual feature cache and the sliding-window text cache that
// collects non-visual anchor-layer states during decoding.

#include "hedit/subspace.hpp"

#include <optional>
#include <string>
#include <utility>

namespace hedit {

/// Write-once holder for the visual features of the current image.
class VisualCache {
 public:
  VisualCache() = default;

  void capture(std::string image_id, VisualFeatureMatrix features) {
    if (features_) {
      detail::fail_contract("VisualCache: image '", image_id_,
                            "' already captured; start a new cache per image");
    }
    image_id_ = std::move(image_id);
    features_.emplace(std::move(features));
  }

  bool has_image() const { return features_.has_value(); }
  const std::string& image_id() const { return image_id_; }

  const VisualFeatureMatrix& features() const {
    if (!features_) detail::fail_contract("VisualCache: no image captured");
    return *features_;
  }

 private:
  std::string image_id_;
  std::optional<VisualFeatureMatrix> features_;
};

/// Fixed-capacity FIFO of hidden states. Push is O(d) regardless of
/// capacity; the oldest row is evicted once full.
class TextCache {
 public:
  using Storage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  TextCache(Index capacity, Index d) : rows_(capacity, d) {
    if (capacity < 1 || d < 1) {
      detail::fail_contract("TextCache: capacity and d must be >= 1, got ", capacity, ", ", d);
    }
  }

  void push(const HiddenState& h) {
    require_dim(h, dim(), "TextCache::push");
    require_finite(h, "TextCache::push");
    rows_.row(head_) = h.transpose();
    head_ = (head_ + 1) % capacity();
    if (count_ < capacity()) ++count_;
  }

  Index count() const { return count_; }
  Index capacity() const { return rows_.rows(); }
  Index dim() const { return rows_.cols(); }
  bool empty() const { return count_ == 0; }

  /// Dense copy, oldest row first; 0 x d when empty.
  Matrix snapshot() const {
    Matrix out(count_, dim());
    const Index start = (head_ - count_ + capacity()) % capacity();
    for (Index i = 0; i < count_; ++i) out.row(i) = rows_.row((start + i) % capacity());
    return out;
  }

  void clear() {
    head_ = 0;
    count_ = 0;
  }

 private:
  Storage rows_;
  Index head_ = 0;
  Index count_ = 0;
};

}  // namespace hedit

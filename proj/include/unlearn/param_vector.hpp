// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace unlearn {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t length() const { return rows * cols; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Flat trainable scalars of one network, carved into named, disjoint,
/// contiguous segments. Gradients, masks and optimizer moments are plain
/// vectors aligned element-for-element with `values()`.
class ParamVector {
 public:
  /// Appends a rows x cols segment at the current end; returns its offset.
  std::size_t add_segment(std::string name, std::size_t rows, std::size_t cols, double fill = 0.0);

  const Segment& segment(std::string_view name) const;
  const std::vector<Segment>& segments() const { return segments_; }
  bool has_segment(std::string_view name) const;

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values(const Segment& seg) { return std::span<double>(values_).subspan(seg.offset, seg.length()); }
  std::span<const double> values(const Segment& seg) const {
    return std::span<const double>(values_).subspan(seg.offset, seg.length());
  }

  /// Same segment layout as `other`.
  bool aligned_with(const ParamVector& other) const { return segments_ == other.segments_; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<Segment> segments_;
  std::vector<double> values_;
};

}  // namespace unlearn

#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "srnn/error.hpp"

namespace srnn {

// Ordered index subset z into one album: 0-based, strictly increasing, at
// least two entries (a story needs at least one transition). Serialized
// forms are 1-based; the conversion happens only at the JSON boundary.
class StoryIndices {
 public:
  StoryIndices() = default;

  StoryIndices(std::vector<std::size_t> indices, std::size_t album_len)
      : indices_(std::move(indices)) {
    require(indices_.size() >= 2, ErrorCode::invalid_argument,
            "story needs at least two indices");
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      require(indices_[i] < album_len, ErrorCode::invalid_argument,
              "story index " + std::to_string(indices_[i]) + " out of range for album of " +
                  std::to_string(album_len) + " items");
      if (i > 0)
        require(indices_[i] > indices_[i - 1], ErrorCode::invalid_argument,
                "story indices must be strictly increasing");
    }
  }

  // The no-skip story: the first n items.
  static StoryIndices prefix(std::size_t n, std::size_t album_len) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return StoryIndices(std::move(idx), album_len);
  }

  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }
  std::size_t back() const { return indices_.back(); }

  friend bool operator==(const StoryIndices& a, const StoryIndices& b) {
    return a.indices_ == b.indices_;
  }
  friend bool operator<(const StoryIndices& a, const StoryIndices& b) {
    return a.indices_ < b.indices_;
  }

 private:
  std::vector<std::size_t> indices_;
};

}  // namespace srnn

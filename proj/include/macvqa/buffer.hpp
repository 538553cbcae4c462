#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "macvqa/datagen.hpp"

namespace macvqa {

/// Bounded rehearsal store filled by reservoir sampling: after s offers with
/// s > capacity every offered sample is retained with probability capacity/s.
class RehearsalBuffer {
 public:
  RehearsalBuffer() = default;
  explicit RehearsalBuffer(std::size_t capacity) : capacity_(capacity) { items_.reserve(capacity); }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  std::uint64_t seen() const noexcept { return seen_; }
  const std::vector<datagen::Sample>& items() const noexcept { return items_; }

  template <class Rng>
  void offer(const datagen::Sample& s, Rng& rng) {
    ++seen_;
    if (capacity_ == 0) return;
    if (items_.size() < capacity_) {
      items_.push_back(s);
      return;
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
    const auto j = pick(rng);
    if (j < capacity_) items_[static_cast<std::size_t>(j)] = s;
  }

  /// Uniform draw; buffer must be non-empty.
  template <class Rng>
  const datagen::Sample& draw(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    return items_[pick(rng)];
  }

  void restore(std::size_t capacity, std::uint64_t seen, std::vector<datagen::Sample> items) {
    capacity_ = capacity;
    seen_ = seen;
    items_ = std::move(items);
  }

 private:
  std::size_t capacity_ = 0;
  std::uint64_t seen_ = 0;
  std::vector<datagen::Sample> items_;
};

}  // namespace macvqa

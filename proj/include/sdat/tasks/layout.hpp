#pragma once

#include <cstddef>

namespace sdat::tasks {

/// Partition of the vocabulary into disjoint bands:
/// [pad, query] specials, then keys, values, and filler.
struct TokenLayout {
  static constexpr int kPad = 0;
  static constexpr int kQuery = 1;
  static constexpr int kSpecials = 2;

  int key_count = 8;
  int value_count = 16;
  int filler_count = 8;

  int key_begin() const { return kSpecials; }
  int value_begin() const { return key_begin() + key_count; }
  int filler_begin() const { return value_begin() + value_count; }
  std::size_t vocab() const {
    return static_cast<std::size_t>(kSpecials + key_count + value_count + filler_count);
  }

  bool is_key(int t) const { return t >= key_begin() && t < value_begin(); }
  bool is_value(int t) const { return t >= value_begin() && t < filler_begin(); }
  bool is_filler(int t) const {
    return t >= filler_begin() && t < static_cast<int>(vocab());
  }
};

}  // namespace sdat::tasks

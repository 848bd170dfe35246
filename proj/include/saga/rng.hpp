// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace saga {

/// Counter-based keyed stream derivation: each (root seed, path) pair maps to
/// an independent engine seed, so enabling one consumer never shifts another's
/// stream. Children are derived by hashing path components into the key.
class RngStream {
 public:
  static RngStream root(uint64_t seed);

  RngStream child(const std::string& name) const;
  RngStream child(uint64_t index) const;

  uint64_t key() const { return key_; }
  std::mt19937_64 engine() const { return std::mt19937_64(key_); }

 private:
  explicit RngStream(uint64_t key) : key_(key) {}
  uint64_t key_ = 0;
};

/// splitmix64 finalizer, the usual seed-scrambling bijection.
uint64_t mix64(uint64_t x);

}  // namespace saga

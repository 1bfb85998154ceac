#pragma once

#include <bit>
#include <cstdint>

#include "facts/common.hpp"

namespace facts {

/// The public length-s bit vector T. Bits are packed into 64-bit words,
/// little-endian bit order within a word (table index i lives at bit i%64 of
/// word i/64). `ones()` tracks the set-bit count m and is kept equal to the
/// popcount by construction: bits can only go 0 -> 1 within an epoch.
class BitTable {
 public:
  BitTable() = default;

  explicit BitTable(std::uint64_t size)
      : words_((size + 63) / 64, 0), size_(size) {}

  std::uint64_t size() const { return size_; }
  std::uint64_t ones() const { return ones_; }

  bool test(std::uint64_t i) const {
    check_index(i);
    return (words_[i >> 6] >> (i & 63)) & 1;
  }

  /// Flips bit i from 0 to 1. A non-abort increment writes exactly one bit
  /// and never touches a 1 bit, so double-setting is a contract violation.
  void set(std::uint64_t i) {
    check_index(i);
    std::uint64_t& w = words_[i >> 6];
    const std::uint64_t mask = std::uint64_t{1} << (i & 63);
    if (w & mask) throw ContractError("BitTable::set: bit already set");
    w |= mask;
    ++ones_;
  }

  /// Epoch reset: zero everything. Within an epoch m never decreases.
  void clear_all() {
    std::fill(words_.begin(), words_.end(), 0);
    ones_ = 0;
  }

  std::uint64_t popcount() const {
    std::uint64_t total = 0;
    for (std::uint64_t w : words_) total += static_cast<std::uint64_t>(std::popcount(w));
    return total;
  }

  // ---- exclusive-writer contract ----
  // Actual mutual exclusion is the owner's job (the complaint server holds a
  // real mutex); the table just carries the flag so mutating CCBF operations
  // can reject callers that skipped the lock.

  bool write_locked() const { return write_locked_; }

  class WriteGuard {
   public:
    explicit WriteGuard(BitTable& t) : table_(&t) {
      if (t.write_locked_) throw ContractError("BitTable: write lock already held");
      t.write_locked_ = true;
    }
    ~WriteGuard() {
      if (table_) table_->write_locked_ = false;
    }
    WriteGuard(WriteGuard&& o) noexcept : table_(o.table_) { o.table_ = nullptr; }
    WriteGuard& operator=(WriteGuard&& o) noexcept {
      if (this != &o) {
        if (table_) table_->write_locked_ = false;
        table_ = o.table_;
        o.table_ = nullptr;
      }
      return *this;
    }
    WriteGuard(const WriteGuard&) = delete;
    WriteGuard& operator=(const WriteGuard&) = delete;

   private:
    BitTable* table_;
  };

  // ---- canonical snapshot format ----
  // 8-byte little-endian s, 8-byte little-endian m, ceil(s/8) packed bytes
  // (bit i at byte i/8, LSB-first). Shared by table sync and golden files.

  Bytes serialize() const {
    Bytes out;
    out.reserve(16 + (size_ + 7) / 8);
    put_u64le(out, size_);
    put_u64le(out, ones_);
    const std::uint64_t nbytes = (size_ + 7) / 8;
    for (std::uint64_t b = 0; b < nbytes; ++b)
      out.push_back(static_cast<std::uint8_t>(words_[b >> 3] >> (8 * (b & 7))));
    return out;
  }

  static BitTable deserialize(ByteView data) {
    if (data.size() < 16) throw ParameterError("table snapshot: short header");
    const std::uint64_t s = get_u64le(data.data());
    const std::uint64_t m = get_u64le(data.data() + 8);
    const std::uint64_t nbytes = (s + 7) / 8;
    if (data.size() != 16 + nbytes) throw ParameterError("table snapshot: length mismatch");
    BitTable t(s);
    for (std::uint64_t b = 0; b < nbytes; ++b)
      t.words_[b >> 3] |= std::uint64_t{data[16 + b]} << (8 * (b & 7));
    t.ones_ = t.popcount();
    if (t.ones_ != m) throw ParameterError("table snapshot: m does not match popcount");
    if (s % 8 != 0 && (data[16 + nbytes - 1] >> (s % 8)) != 0)
      throw ParameterError("table snapshot: nonzero padding bits");
    return t;
  }

 private:
  void check_index(std::uint64_t i) const {
    if (i >= size_) throw ParameterError("BitTable: index out of range");
  }

  std::vector<std::uint64_t> words_;
  std::uint64_t size_ = 0;
  std::uint64_t ones_ = 0;
  bool write_locked_ = false;
};

}  // namespace facts

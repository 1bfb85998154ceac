#pragma once

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "facts/common.hpp"

namespace facts {

using Digest = std::array<std::uint8_t, 32>;

namespace detail {

// OpenSSL 3 charges a provider lookup per implicit fetch; grab the MD once.
inline const EVP_MD* sha3_256_md() {
  static const EVP_MD* md = EVP_MD_fetch(nullptr, "SHA3-256", nullptr);
  if (!md) throw std::runtime_error("OpenSSL: SHA3-256 unavailable");
  return md;
}

struct MdCtxFree {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;

}  // namespace detail

inline Digest sha3_256(std::initializer_list<ByteView> parts) {
  thread_local detail::MdCtxPtr ctx{EVP_MD_CTX_new()};
  if (EVP_DigestInit_ex(ctx.get(), detail::sha3_256_md(), nullptr) != 1)
    throw std::runtime_error("OpenSSL: DigestInit failed");
  for (ByteView p : parts)
    if (EVP_DigestUpdate(ctx.get(), p.data(), p.size()) != 1)
      throw std::runtime_error("OpenSSL: DigestUpdate failed");
  Digest out;
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size())
    throw std::runtime_error("OpenSSL: DigestFinal failed");
  return out;
}

inline Digest sha3_256(ByteView data) { return sha3_256({data}); }

/// SHA3-256 in counter mode: block(i) = H(prefix || be64(i)), consumed as
/// big-endian 64-bit words. The stream is a pure function of the prefix.
class HashCounterStream {
 public:
  explicit HashCounterStream(Bytes prefix) : prefix_(std::move(prefix)) {
    prefix_.resize(prefix_.size() + 8);  // trailing counter slot
  }

  std::uint64_t next_u64() {
    if (word_ == 4) refill();
    std::uint64_t v = get_u64be(block_.data() + 8 * word_);
    ++word_;
    return v;
  }

  /// Uniform draw in [0, bound) by rejection on 64-bit words.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw ParameterError("uniform_below: bound must be positive");
    if ((bound & (bound - 1)) == 0) return next_u64() & (bound - 1);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t x = next_u64();
      if (x >= threshold) return x % bound;
    }
  }

 private:
  void refill() {
    std::uint8_t* ctr = prefix_.data() + prefix_.size() - 8;
    for (int i = 7; i >= 0; --i) ctr[i] = static_cast<std::uint8_t>(counter_ >> (8 * (7 - i)));
    block_ = sha3_256(ByteView{prefix_});
    ++counter_;
    word_ = 0;
  }

  Bytes prefix_;
  Digest block_{};
  std::uint64_t counter_ = 0;
  int word_ = 4;  // force refill on first draw
};

}  // namespace facts

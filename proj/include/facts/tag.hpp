#pragma once

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <memory>
#include <optional>

#include "facts/sha3.hpp"

namespace facts {

// Origination tags: tag_x = (r, e, sigma) where r is a 32-byte salt,
// e an AEAD encryption of the originator identity under the server's key,
// and sigma the server's Ed25519 signature over h || e with h = H(r || x).
// The serialized tag travels with the message through every forward and is
// also the CCBF item key.

constexpr std::uint8_t kTagVersion = 0x01;
constexpr std::size_t kSaltSize = 32;
constexpr std::size_t kSignatureSize = 64;
constexpr std::size_t kAeadNonceSize = 12;
constexpr std::size_t kAeadTagSize = 16;

using Salt = std::array<std::uint8_t, kSaltSize>;
using Signature = std::array<std::uint8_t, kSignatureSize>;
using PublicKey = std::array<std::uint8_t, 32>;
using SymmetricKey = std::array<std::uint8_t, 32>;

namespace detail {

struct PkeyFree {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyFree>;

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;

inline void random_bytes(std::uint8_t* out, std::size_t len) {
  if (RAND_bytes(out, static_cast<int>(len)) != 1)
    throw std::runtime_error("OpenSSL: RAND_bytes failed");
}

}  // namespace detail

inline Salt make_salt() {
  Salt r;
  detail::random_bytes(r.data(), r.size());
  return r;
}

/// h = SHA3-256(r || x).
inline Digest hash_message(const Salt& salt, ByteView message) {
  return sha3_256({ByteView{salt}, message});
}

struct Tag {
  Salt salt{};       // r
  Bytes id_ct;       // e = nonce || ciphertext || auth tag
  Signature sig{};   // sigma over h || e

  /// Canonical bytes: version || r(32) || len(e) as u16 BE || e || sigma(64).
  /// This exact byte string is the wire form and the CCBF item key.
  Bytes serialize() const {
    if (id_ct.size() > 0xffff) throw ParameterError("Tag: identity ciphertext too long");
    Bytes out;
    out.reserve(1 + kSaltSize + 2 + id_ct.size() + kSignatureSize);
    out.push_back(kTagVersion);
    out.insert(out.end(), salt.begin(), salt.end());
    put_u16be(out, static_cast<std::uint16_t>(id_ct.size()));
    out.insert(out.end(), id_ct.begin(), id_ct.end());
    out.insert(out.end(), sig.begin(), sig.end());
    return out;
  }

  static std::optional<Tag> parse(ByteView data) {
    if (data.size() < 1 + kSaltSize + 2 + kSignatureSize) return std::nullopt;
    if (data[0] != kTagVersion) return std::nullopt;
    const std::size_t e_len = get_u16be(data.data() + 1 + kSaltSize);
    if (data.size() != 1 + kSaltSize + 2 + e_len + kSignatureSize) return std::nullopt;
    Tag t;
    std::copy_n(data.data() + 1, kSaltSize, t.salt.begin());
    t.id_ct.assign(data.begin() + 1 + kSaltSize + 2, data.begin() + 1 + kSaltSize + 2 + e_len);
    std::copy_n(data.data() + 1 + kSaltSize + 2 + e_len, kSignatureSize, t.sig.begin());
    return t;
  }

  friend bool operator==(const Tag& a, const Tag& b) {
    return a.salt == b.salt && a.id_ct == b.id_ct && a.sig == b.sig;
  }
};

/// Server key material from Setup. Private halves never appear in protocol
/// messages; the derivation secret rotates at each epoch boundary.
class ServerKeys {
 public:
  static ServerKeys generate() {
    ServerKeys k;
    detail::random_bytes(k.id_key_.data(), k.id_key_.size());
    detail::random_bytes(k.derive_key_.data(), k.derive_key_.size());
    EVP_PKEY_CTX* ctx = EVP_PKEY_CTX_new_id(EVP_PKEY_ED25519, nullptr);
    if (!ctx) throw std::runtime_error("OpenSSL: ed25519 ctx");
    EVP_PKEY* raw = nullptr;
    if (EVP_PKEY_keygen_init(ctx) != 1 || EVP_PKEY_keygen(ctx, &raw) != 1) {
      EVP_PKEY_CTX_free(ctx);
      throw std::runtime_error("OpenSSL: ed25519 keygen failed");
    }
    EVP_PKEY_CTX_free(ctx);
    k.sign_key_.reset(raw);
    std::size_t len = k.sign_pub_.size();
    if (EVP_PKEY_get_raw_public_key(raw, k.sign_pub_.data(), &len) != 1 || len != 32)
      throw std::runtime_error("OpenSSL: ed25519 public key export failed");
    return k;
  }

  const SymmetricKey& id_key() const { return id_key_; }
  const SymmetricKey& derive_key() const { return derive_key_; }
  const PublicKey& sign_pub() const { return sign_pub_; }
  EVP_PKEY* sign_key() const { return sign_key_.get(); }

  void rotate_derive_key() { detail::random_bytes(derive_key_.data(), derive_key_.size()); }

 private:
  SymmetricKey id_key_{};
  SymmetricKey derive_key_{};
  detail::PkeyPtr sign_key_;
  PublicKey sign_pub_{};
};

namespace detail {

inline const EVP_CIPHER* chacha20poly1305() {
  static const EVP_CIPHER* c = EVP_CIPHER_fetch(nullptr, "ChaCha20-Poly1305", nullptr);
  if (!c) throw std::runtime_error("OpenSSL: ChaCha20-Poly1305 unavailable");
  return c;
}

inline Bytes aead_encrypt(const SymmetricKey& key, ByteView plaintext) {
  Bytes out(kAeadNonceSize + plaintext.size() + kAeadTagSize);
  random_bytes(out.data(), kAeadNonceSize);
  CipherCtxPtr ctx{EVP_CIPHER_CTX_new()};
  const std::uint8_t aad[1] = {kTagVersion};
  int len = 0;
  if (EVP_EncryptInit_ex(ctx.get(), chacha20poly1305(), nullptr, key.data(), out.data()) != 1 ||
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad, 1) != 1 ||
      EVP_EncryptUpdate(ctx.get(), out.data() + kAeadNonceSize, &len, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1)
    throw std::runtime_error("OpenSSL: AEAD encrypt failed");
  int fin = 0;
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + kAeadNonceSize + len, &fin) != 1)
    throw std::runtime_error("OpenSSL: AEAD encrypt final failed");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, kAeadTagSize,
                          out.data() + kAeadNonceSize + plaintext.size()) != 1)
    throw std::runtime_error("OpenSSL: AEAD tag extract failed");
  return out;
}

inline std::optional<Bytes> aead_decrypt(const SymmetricKey& key, ByteView blob) {
  if (blob.size() < kAeadNonceSize + kAeadTagSize) return std::nullopt;
  const std::size_t pt_len = blob.size() - kAeadNonceSize - kAeadTagSize;
  Bytes out(pt_len);
  CipherCtxPtr ctx{EVP_CIPHER_CTX_new()};
  const std::uint8_t aad[1] = {kTagVersion};
  std::uint8_t auth_tag[kAeadTagSize];
  std::memcpy(auth_tag, blob.data() + kAeadNonceSize + pt_len, kAeadTagSize);
  int len = 0;
  if (EVP_DecryptInit_ex(ctx.get(), chacha20poly1305(), nullptr, key.data(), blob.data()) != 1 ||
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad, 1) != 1 ||
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, blob.data() + kAeadNonceSize,
                        static_cast<int>(pt_len)) != 1)
    return std::nullopt;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, kAeadTagSize, auth_tag) != 1)
    return std::nullopt;
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1) return std::nullopt;
  return out;
}

inline Bytes signed_payload(const Digest& h, const Bytes& e) {
  Bytes msg;
  msg.reserve(h.size() + e.size());
  msg.insert(msg.end(), h.begin(), h.end());
  msg.insert(msg.end(), e.begin(), e.end());
  return msg;
}

}  // namespace detail

/// Server side of Originate: e <- AEAD(id_key, originator id) with a fresh
/// nonce, sigma = Sign(h || e). Two calls with identical inputs differ in e.
/// The identity plaintext is padded to a fixed 33 bytes so the ciphertext
/// length cannot leak the originator's id length to receivers.
inline std::pair<Bytes, Signature> server_issue_tag(const ServerKeys& keys,
                                                    std::string_view originator,
                                                    const Digest& h) {
  if (originator.empty() || originator.size() > 32)
    throw ParameterError("server_issue_tag: originator id must be 1..32 bytes");
  Bytes padded_id(33, 0);
  padded_id[0] = static_cast<std::uint8_t>(originator.size());
  std::copy(originator.begin(), originator.end(), padded_id.begin() + 1);
  Bytes e = detail::aead_encrypt(keys.id_key(), ByteView{padded_id});
  const Bytes msg = detail::signed_payload(h, e);
  Signature sig{};
  std::size_t sig_len = sig.size();
  detail::MdCtxPtr ctx{EVP_MD_CTX_new()};
  if (EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, keys.sign_key()) != 1 ||
      EVP_DigestSign(ctx.get(), sig.data(), &sig_len, msg.data(), msg.size()) != 1 ||
      sig_len != sig.size())
    throw std::runtime_error("OpenSSL: ed25519 sign failed");
  return {std::move(e), sig};
}

/// Receiver verification: recompute h = H(r || x) and check sigma over h || e.
inline bool verify_tag(const PublicKey& server_pub, const Tag& tag, ByteView message) {
  if (tag.id_ct.size() < kAeadNonceSize + kAeadTagSize) return false;
  const Digest h = hash_message(tag.salt, message);
  const Bytes msg = detail::signed_payload(h, tag.id_ct);
  detail::PkeyPtr pub{EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr,
                                                  server_pub.data(), server_pub.size())};
  if (!pub) return false;
  detail::MdCtxPtr ctx{EVP_MD_CTX_new()};
  if (EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pub.get()) != 1) return false;
  return EVP_DigestVerify(ctx.get(), tag.sig.data(), tag.sig.size(), msg.data(), msg.size()) == 1;
}

/// Audit opening: verify exactly as a receiver would, then decrypt e.
/// Returns the originator identity, or nullopt for any invalid tag.
inline std::optional<std::string> audit_open(const ServerKeys& keys, const Tag& tag,
                                             ByteView message) {
  if (!verify_tag(keys.sign_pub(), tag, message)) return std::nullopt;
  std::optional<Bytes> padded = detail::aead_decrypt(keys.id_key(), ByteView{tag.id_ct});
  if (!padded || padded->size() != 33) return std::nullopt;
  const std::size_t len = (*padded)[0];
  if (len == 0 || len > 32) return std::nullopt;
  for (std::size_t i = 1 + len; i < padded->size(); ++i)
    if ((*padded)[i] != 0) return std::nullopt;
  return std::string(padded->begin() + 1, padded->begin() + 1 + len);
}

}  // namespace facts

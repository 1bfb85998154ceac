#pragma once

#include <optional>

#include "facts/params.hpp"
#include "facts/sha3.hpp"
#include "facts/stream.hpp"

namespace facts {

// Wire protocol: every frame is [4-byte big-endian length][1-byte type]
// [payload], the length counting the type byte plus the payload. A 65-byte
// hello ([id length:1][user id zero-padded to 32][SHA3-256(token):32],
// answered by one status byte) opens each connection before any frame.

enum class MsgType : std::uint8_t {
  OriginateReq = 0x01,    // h:32
  OriginateResp = 0x02,   // len-e:2 BE, e, sigma:64
  ComplainBegin = 0x03,   // empty
  ComplainSnapshot = 0x04,  // packed u bits
  ComplainIndex = 0x05,   // index:8 BE, all-ones = abort
  ComplainResult = 0x06,  // code:1
  AuditReq = 0x07,        // len-tag:2 BE, tag, x
  AuditResp = 0x08,       // code:1, originator id when code = Ok
  TableSyncReq = 0x09,    // empty
  TableSyncResp = 0x0A,   // canonical table snapshot bytes
  EpochInfo = 0x0B,       // empty as request; populated as response
};

enum class ComplaintCode : std::uint8_t {
  Accepted = 0,
  InvalidIndex = 1,  // rejected; quota consumed
  Quota = 2,         // per-user limit L exhausted
  EpochFull = 3,     // epoch cap n reached
  Timeout = 4,       // session deadline passed (reaped)
  AbortAck = 5,      // abort acknowledged; quota untouched
};

enum class AuditCode : std::uint8_t {
  Ok = 0,
  InvalidTag = 1,
  BelowThreshold = 2,  // only when the server-side recheck hook is enabled
};

constexpr std::uint64_t kComplaintAbortMarker = ~std::uint64_t{0};
constexpr std::size_t kMaxFrameLen = 64u << 20;
constexpr std::size_t kHelloSize = 1 + 32 + 32;
constexpr std::uint8_t kHelloOk = 0x00;
constexpr std::uint8_t kHelloReject = 0x01;

struct Frame {
  MsgType type;
  Bytes payload;
};

inline void write_frame(Stream& s, MsgType type, ByteView payload) {
  Bytes buf;
  buf.reserve(5 + payload.size());
  put_u32be(buf, static_cast<std::uint32_t>(1 + payload.size()));
  buf.push_back(static_cast<std::uint8_t>(type));
  buf.insert(buf.end(), payload.begin(), payload.end());
  s.write_all(buf.data(), buf.size());
}

inline Frame read_frame(Stream& s) {
  std::uint8_t head[4];
  s.read_exact(head, 4);
  const std::uint32_t len = get_u32be(head);
  if (len == 0 || len > kMaxFrameLen) throw StreamClosed("frame length out of range");
  Frame f;
  std::uint8_t type;
  s.read_exact(&type, 1);
  f.type = static_cast<MsgType>(type);
  f.payload.resize(len - 1);
  if (len > 1) s.read_exact(f.payload.data(), len - 1);
  return f;
}

// ---- hello ----

struct Hello {
  std::string user_id;
  Digest token_hash;
};

inline void write_hello(Stream& s, std::string_view user_id, ByteView token) {
  if (user_id.empty() || user_id.size() > 32)
    throw ParameterError("hello: user id must be 1..32 bytes");
  std::array<std::uint8_t, kHelloSize> buf{};
  buf[0] = static_cast<std::uint8_t>(user_id.size());
  std::copy(user_id.begin(), user_id.end(), buf.begin() + 1);
  const Digest th = sha3_256(token);
  std::copy(th.begin(), th.end(), buf.begin() + 33);
  s.write_all(buf.data(), buf.size());
}

inline std::optional<Hello> read_hello(Stream& s) {
  std::array<std::uint8_t, kHelloSize> buf;
  s.read_exact(buf.data(), buf.size());
  const std::size_t id_len = buf[0];
  if (id_len == 0 || id_len > 32) return std::nullopt;
  for (std::size_t i = 1 + id_len; i < 33; ++i)
    if (buf[i] != 0) return std::nullopt;  // padding must be zero
  Hello h;
  h.user_id.assign(buf.begin() + 1, buf.begin() + 1 + id_len);
  std::copy(buf.begin() + 33, buf.end(), h.token_hash.begin());
  return h;
}

// ---- epoch info payload ----

struct EpochInfo {
  std::uint64_t epoch_id = 0;
  CcbfParams params;
  std::uint32_t quota_limit = 0;  // L
  std::uint64_t table_ones = 0;   // m at response time
  std::array<std::uint8_t, 32> derive_key{};
  std::array<std::uint8_t, 32> server_pubkey{};
};

inline Bytes encode_epoch_info(const EpochInfo& e) {
  Bytes out;
  out.reserve(116);
  put_u64be(out, e.epoch_id);
  put_u64be(out, e.params.s);
  put_u32be(out, e.params.u);
  put_u32be(out, e.params.v);
  put_u64be(out, e.params.n);
  put_u32be(out, e.params.t);
  put_u32be(out, e.params.lambda_stat);
  put_u32be(out, e.quota_limit);
  put_u64be(out, e.table_ones);
  out.insert(out.end(), e.derive_key.begin(), e.derive_key.end());
  out.insert(out.end(), e.server_pubkey.begin(), e.server_pubkey.end());
  return out;
}

inline std::optional<EpochInfo> decode_epoch_info(ByteView b) {
  if (b.size() != 116) return std::nullopt;
  EpochInfo e;
  const std::uint8_t* p = b.data();
  e.epoch_id = get_u64be(p);
  e.params.s = get_u64be(p + 8);
  e.params.u = get_u32be(p + 16);
  e.params.v = get_u32be(p + 20);
  e.params.n = get_u64be(p + 24);
  e.params.t = get_u32be(p + 32);
  e.params.lambda_stat = get_u32be(p + 36);
  e.quota_limit = get_u32be(p + 40);
  e.table_ones = get_u64be(p + 44);
  std::copy_n(p + 52, 32, e.derive_key.begin());
  std::copy_n(p + 84, 32, e.server_pubkey.begin());
  return e;
}

}  // namespace facts

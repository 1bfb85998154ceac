#pragma once

#include <random>

#include "facts/ccbf.hpp"
#include "facts/eems.hpp"
#include "facts/tag.hpp"
#include "facts/tipping.hpp"
#include "facts/wire.hpp"

namespace facts {

struct ClientConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string user_id;
  SymmetricKey auth_token{};
  // optional network-condition injection on this client's connection
  std::chrono::microseconds one_way_delay{0};
  double bandwidth_bits_per_sec = 0.0;
  bool audit_after_complain = false;  // chain complain() into check_and_audit()
};

struct InboxEntry {
  std::string from;
  Tag tag;
  Bytes tag_bytes;  // canonical serialization, carried verbatim on forwards
  Bytes message;
};

struct ComplainResult {
  ComplaintCode code = ComplaintCode::Accepted;
  std::optional<std::uint64_t> sent_index;  // nullopt when abort was sent
};

struct ComplainTiming {
  double snapshot_ms = 0;   // begin sent -> snapshot received
  double index_rtt_ms = 0;  // index sent -> result received
};

struct AuditCheckResult {
  bool audited = false;
  std::int64_t observed_count = 0;
  std::int64_t tau = 0;
  AuditCode server_code = AuditCode::Ok;
  std::string originator;  // set when the server opened the tag
};

/// User-side state machine: originate / forward / receive / complain /
/// audit-check against one FACTS server connection. Single-threaded per
/// instance.
class FactsClient {
 public:
  explicit FactsClient(ClientConfig cfg) : cfg_(std::move(cfg)) {
    std::random_device rd;
    rng_.seed((std::uint64_t(rd()) << 32) ^ rd());
  }

  /// Deterministic index choices for tests.
  void seed_rng(std::uint64_t seed) { rng_.seed(seed); }

  const std::string& id() const { return cfg_.user_id; }
  const CcbfParams& params() const { return epoch_.params; }
  const EpochInfo& epoch() const { return epoch_; }
  const IndexSet& user_set() const { return user_set_; }
  const std::vector<InboxEntry>& inbox() const { return inbox_; }

  /// Open the connection: hello, then epoch info, then derive the user set.
  void connect() {
    std::unique_ptr<Stream> s = tcp_connect(cfg_.host, cfg_.port);
    if (cfg_.one_way_delay.count() > 0 || cfg_.bandwidth_bits_per_sec > 0)
      s = std::make_unique<DelayedStream>(std::move(s), cfg_.one_way_delay,
                                          cfg_.bandwidth_bits_per_sec);
    stream_ = std::move(s);
    write_hello(*stream_, cfg_.user_id, ByteView{cfg_.auth_token});
    std::uint8_t status = 0xff;
    stream_->read_exact(&status, 1);
    if (status != kHelloOk) throw StreamClosed("server rejected credentials");
    refresh_epoch();
  }

  void disconnect() { stream_.reset(); }

  void refresh_epoch() {
    const Frame f = request(MsgType::EpochInfo, {});
    if (f.type != MsgType::EpochInfo) throw StreamClosed("unexpected epoch info reply");
    std::optional<EpochInfo> info = decode_epoch_info(ByteView{f.payload});
    if (!info) throw StreamClosed("bad epoch info payload");
    const bool new_epoch = !have_epoch_ || info->epoch_id != epoch_.epoch_id;
    epoch_ = *info;
    have_epoch_ = true;
    if (new_epoch)
      user_set_ = derive_user_set(cfg_.user_id,
                                  std::span<const std::uint8_t, 32>{epoch_.derive_key},
                                  epoch_.params);
  }

  /// The Originate exchange: salt, h = H(r || x) to the server, (e, sigma)
  /// back, assembled into the tag.
  Tag originate(ByteView message) {
    const Salt r = make_salt();
    const Digest h = hash_message(r, message);
    const Frame f = request(MsgType::OriginateReq, ByteView{h});
    if (f.type != MsgType::OriginateResp || f.payload.size() < 2 + kSignatureSize)
      throw StreamClosed("bad originate reply");
    const std::size_t e_len = get_u16be(f.payload.data());
    if (f.payload.size() != 2 + e_len + kSignatureSize)
      throw StreamClosed("bad originate reply length");
    Tag tag;
    tag.salt = r;
    tag.id_ct.assign(f.payload.begin() + 2, f.payload.begin() + 2 + e_len);
    std::copy_n(f.payload.data() + 2 + e_len, kSignatureSize, tag.sig.begin());
    return tag;
  }

  /// SendMsg: a fresh message runs Originate and sends the new tag; a forward
  /// still runs a full Originate exchange but discards the result and sends
  /// the original tag bytes verbatim, so the server cannot tell the two apart.
  Bytes send_msg(EemsBus& bus, std::string_view to, const std::optional<InboxEntry>& forward_of,
                 ByteView message) {
    Bytes tag_bytes;
    if (!forward_of) {
      tag_bytes = originate(message).serialize();
    } else {
      (void)originate(message);  // cover traffic; output discarded
      tag_bytes = forward_of->tag_bytes;
    }
    bus.send(cfg_.user_id, to, ByteView{tag_bytes}, message);
    return tag_bytes;
  }

  /// RcvMsg: verify the tag against the message; accept into the inbox or
  /// silently discard.
  bool rcv_msg(EemsBus& bus) {
    std::optional<EemsBus::Delivery> d = bus.receive(cfg_.user_id);
    if (!d) return false;
    std::optional<Tag> tag = Tag::parse(ByteView{d->tag_bytes});
    if (!tag || !verify_tag(epoch_.server_pubkey, *tag, ByteView{d->message})) return false;
    inbox_.push_back({std::move(d->from), std::move(*tag), std::move(d->tag_bytes),
                      std::move(d->message)});
    return true;
  }

  /// Complain: the client half of Increment. Receives the snapshot of its u
  /// bit values, picks the index per the increment rules (item set derived
  /// from the tag bytes), and reports the server verdict.
  ComplainResult complain(const InboxEntry& entry, ComplainTiming* timing = nullptr) {
    using clock = std::chrono::steady_clock;
    // V_x depends only on the tag bytes; derive it before opening the
    // session so the global lock is never held across the derivation
    const IndexSet item_set = derive_item_set(ByteView{entry.tag_bytes}, epoch_.params);
    const auto t0 = clock::now();
    const Frame begin = request(MsgType::ComplainBegin, {});
    const auto t1 = clock::now();
    if (begin.type == MsgType::ComplainResult) {
      if (begin.payload.size() != 1) throw StreamClosed("bad complaint result");
      return {static_cast<ComplaintCode>(begin.payload[0]), std::nullopt};
    }
    if (begin.type != MsgType::ComplainSnapshot ||
        begin.payload.size() != (user_set_.size() + 7) / 8)
      throw StreamClosed("bad complaint snapshot");
    const auto choice =
        choose_complaint_index(ByteView{begin.payload}, user_set_, item_set, rng_);
    Bytes idx;
    put_u64be(idx, choice ? choice->first : kComplaintAbortMarker);
    const auto t2 = clock::now();
    const Frame result = request(MsgType::ComplainIndex, ByteView{idx});
    const auto t3 = clock::now();
    if (result.type != MsgType::ComplainResult || result.payload.size() != 1)
      throw StreamClosed("bad complaint result");
    if (timing) {
      timing->snapshot_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      timing->index_rtt_ms = std::chrono::duration<double, std::milli>(t3 - t2).count();
    }
    ComplainResult out{static_cast<ComplaintCode>(result.payload[0]),
                       choice ? std::optional<std::uint64_t>(choice->first) : std::nullopt};
    if (cfg_.audit_after_complain && out.code == ComplaintCode::Accepted) check_and_audit(entry);
    return out;
  }

  /// Refresh the table copy via TABLE_SYNC.
  void sync_table() {
    const Frame f = request(MsgType::TableSyncReq, {});
    if (f.type != MsgType::TableSyncResp) throw StreamClosed("bad table sync reply");
    table_ = BitTable::deserialize(ByteView{f.payload});
    have_table_ = true;
  }

  const BitTable& table() const {
    if (!have_table_) throw ContractError("table: sync_table first");
    return table_;
  }

  /// Audit algorithm steps 1-3: recompute tau from the snapshot's m, run
  /// TestCount locally, and submit (tag, x) only past the threshold.
  AuditCheckResult check_and_audit(const InboxEntry& entry, bool refresh_snapshot = true) {
    if (refresh_snapshot || !have_table_) sync_table();
    const CcbfParams& p = epoch_.params;
    const IndexSet item_set = derive_item_set(ByteView{entry.tag_bytes}, p);
    AuditCheckResult res;
    res.tau = tipping_point(p.s, p.u, p.v, table_.ones(), p.t);
    res.observed_count = item_fill_count(table_, item_set);
    if (res.observed_count < res.tau) return res;  // below threshold
    Bytes payload;
    payload.reserve(2 + entry.tag_bytes.size() + entry.message.size());
    put_u16be(payload, static_cast<std::uint16_t>(entry.tag_bytes.size()));
    payload.insert(payload.end(), entry.tag_bytes.begin(), entry.tag_bytes.end());
    payload.insert(payload.end(), entry.message.begin(), entry.message.end());
    const Frame f = request(MsgType::AuditReq, ByteView{payload});
    if (f.type != MsgType::AuditResp || f.payload.empty())
      throw StreamClosed("bad audit reply");
    res.audited = true;
    res.server_code = static_cast<AuditCode>(f.payload[0]);
    if (res.server_code == AuditCode::Ok)
      res.originator.assign(f.payload.begin() + 1, f.payload.end());
    return res;
  }

 private:
  Frame request(MsgType type, ByteView payload) {
    if (!stream_) throw ContractError("client not connected");
    write_frame(*stream_, type, payload);
    return read_frame(*stream_);
  }

  ClientConfig cfg_;
  std::unique_ptr<Stream> stream_;
  EpochInfo epoch_;
  bool have_epoch_ = false;
  IndexSet user_set_;
  std::vector<InboxEntry> inbox_;
  BitTable table_;
  bool have_table_ = false;
  std::mt19937_64 rng_;
};

}  // namespace facts

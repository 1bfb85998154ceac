#pragma once

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include "facts/ccbf.hpp"
#include "facts/tag.hpp"
#include "facts/tipping.hpp"
#include "facts/wire.hpp"

namespace facts {

struct ServerConfig {
  std::string listen_addr = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  std::uint64_t user_count = 0;
  std::uint64_t n = 0;
  std::uint32_t t = 0;
  std::uint32_t quota_limit = 0;  // L complaints per user per epoch
  std::uint32_t lambda_stat = 10;
  std::chrono::milliseconds session_deadline{5000};
  std::chrono::seconds epoch_length{0};  // 0: epochs reset manually only
  bool audit_recheck_count = false;  // optional server-side TestCount before opening
  bool record_transcripts = false;   // keep per-connection frame logs (tests)
};

struct UserRecord {
  std::string id;
  SymmetricKey auth_token{};
  std::uint32_t complaints_used = 0;
  std::uint64_t set_epoch = ~std::uint64_t{0};  // epoch the cached set was derived for
  IndexSet user_set;
};

struct SessionLogEntry {
  std::string user;
  std::chrono::steady_clock::time_point granted;
  std::chrono::steady_clock::time_point ended;
  ComplaintCode outcome = ComplaintCode::Accepted;
};

struct FrameRecord {
  bool inbound = false;
  MsgType type{};
  std::size_t payload_size = 0;
};

/// The complaint service. One instance owns the epoch state: keys, user
/// records and quotas, and the bit table. Complaint sessions are serialized
/// through a FIFO ticket queue around the single table write lock; origination,
/// audit, and table sync run concurrently on their connection threads.
class FactsServer {
 public:
  FactsServer() = default;
  explicit FactsServer(const ServerConfig& cfg) { setup(cfg); }

  ~FactsServer() { stop(); }
  FactsServer(const FactsServer&) = delete;
  FactsServer& operator=(const FactsServer&) = delete;

  /// Setup: generate keys, register users with fresh bearer tokens, allocate
  /// the zeroed table. Parameters come from the sizing recipe.
  void setup(const ServerConfig& cfg) {
    std::lock_guard<std::mutex> lk(mu_);
    if (set_up_) throw ContractError("setup: server state already exists");
    if (cfg.user_count == 0) throw ParameterError("setup: at least one user required");
    if (cfg.quota_limit == 0) throw ParameterError("setup: quota limit L must be positive");
    params_ = choose_params(cfg.n, cfg.t, cfg.lambda_stat);
    keys_ = ServerKeys::generate();
    table_ = BitTable(params_.s);
    users_.reserve(cfg.user_count);
    for (std::uint64_t i = 0; i < cfg.user_count; ++i) {
      UserRecord rec;
      rec.id = "user-" + std::to_string(i + 1);
      detail::random_bytes(rec.auth_token.data(), rec.auth_token.size());
      users_.emplace(rec.id, std::move(rec));
    }
    cfg_ = cfg;
    set_up_ = true;
  }

  /// Bind, listen, and spawn the accept/reaper (and epoch timer) threads.
  void start() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (!set_up_) throw ContractError("start: setup required first");
      if (listener_) throw ContractError("start: already running");
      listener_ = std::make_unique<TcpListener>(cfg_.listen_addr, cfg_.port);
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
    reaper_thread_ = std::thread([this] { reaper_loop(); });
    if (cfg_.epoch_length.count() > 0)
      epoch_thread_ = std::thread([this] { epoch_loop(); });
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (stopping_) return;
      stopping_ = true;
      session_cv_.notify_all();
      stop_cv_.notify_all();
    }
    if (listener_) listener_->close();
    if (accept_thread_.joinable()) accept_thread_.join();
    // no new connections can appear past this point
    {
      std::lock_guard<std::mutex> lk(conns_mu_);
      for (auto& [id, s] : open_conns_) s->shutdown();
    }
    if (reaper_thread_.joinable()) reaper_thread_.join();
    if (epoch_thread_.joinable()) epoch_thread_.join();
    for (std::thread& t : conn_threads_)
      if (t.joinable()) t.join();
  }

  std::uint16_t port() const {
    if (!listener_) throw ContractError("port: server not started");
    return listener_->port();
  }

  // ---- introspection (tests and tools) ----

  struct Stats {
    std::uint64_t epoch_id = 0;
    std::uint64_t complaint_total = 0;
    std::uint64_t table_ones = 0;
  };

  Stats stats() const {
    std::lock_guard<std::mutex> lk(mu_);
    return {epoch_id_, complaint_total_, table_.ones()};
  }

  CcbfParams params() const {
    std::lock_guard<std::mutex> lk(mu_);
    return params_;
  }

  PublicKey server_pubkey() const {
    std::lock_guard<std::mutex> lk(mu_);
    return keys_.sign_pub();
  }

  std::vector<std::pair<std::string, SymmetricKey>> user_credentials() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::pair<std::string, SymmetricKey>> out;
    out.reserve(users_.size());
    for (const auto& [id, rec] : users_) out.emplace_back(id, rec.auth_token);
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.first < b.first; });
    return out;
  }

  std::vector<SessionLogEntry> session_log() const {
    std::lock_guard<std::mutex> lk(mu_);
    return session_log_;
  }

  std::vector<std::pair<Bytes, std::string>> audit_log() const {
    std::lock_guard<std::mutex> lk(mu_);
    return audit_log_;
  }

  /// Per-connection frame logs in connection-arrival order.
  std::vector<std::vector<FrameRecord>> connection_transcripts() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::pair<std::uint64_t, std::vector<FrameRecord>>> pairs(
        transcripts_.begin(), transcripts_.end());
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<FrameRecord>> out;
    out.reserve(pairs.size());
    for (auto& [id, frames] : pairs) out.push_back(std::move(frames));
    return out;
  }

  Bytes table_snapshot() const {
    std::lock_guard<std::mutex> lk(mu_);
    return table_.serialize();
  }

  /// Zero the table and quotas, rotate the derivation key, bump the epoch.
  /// Queues behind (and outlives via the reaper) any live complaint session.
  void epoch_reset() {
    std::unique_lock<std::mutex> lk(mu_);
    if (!set_up_) throw ContractError("epoch_reset: setup required first");
    const std::uint64_t ticket = next_ticket_++;
    session_cv_.wait(lk, [&] { return serving_ticket_ == ticket || stopping_; });
    if (stopping_) {
      advance_ticket();
      return;
    }
    table_.clear_all();
    complaint_total_ = 0;
    for (auto& [id, rec] : users_) rec.complaints_used = 0;
    keys_.rotate_derive_key();
    ++epoch_id_;
    advance_ticket();
  }

 private:
  // ---- complaint session machinery ----

  void advance_ticket() {
    ++serving_ticket_;
    session_cv_.notify_all();
  }

  void end_session(ComplaintCode outcome) {  // mu_ held, session_ live
    session_log_.push_back({session_->user, session_->granted,
                            std::chrono::steady_clock::now(), outcome});
    session_.reset();  // drops the WriteGuard
    advance_ticket();
  }

  void ensure_user_set(UserRecord& rec) {  // mu_ held
    if (rec.set_epoch == epoch_id_) return;
    rec.user_set = derive_user_set(rec.id, std::span<const std::uint8_t, 32>{keys_.derive_key()},
                                   params_);
    rec.set_epoch = epoch_id_;
  }

  /// FIFO-granted begin. On success fills the packed snapshot of the user's
  /// bit values and leaves the session live; otherwise returns the reject code.
  std::optional<ComplaintCode> begin_complaint(const std::string& user, Bytes& snapshot_out) {
    std::unique_lock<std::mutex> lk(mu_);
    const std::uint64_t ticket = next_ticket_++;
    session_cv_.wait(lk, [&] { return serving_ticket_ == ticket || stopping_; });
    if (stopping_) {
      advance_ticket();
      throw StreamClosed("server stopping");
    }
    UserRecord& rec = users_.at(user);
    if (complaint_total_ >= cfg_.n) {
      advance_ticket();
      return ComplaintCode::EpochFull;
    }
    if (rec.complaints_used >= cfg_.quota_limit) {
      advance_ticket();
      return ComplaintCode::Quota;
    }
    ensure_user_set(rec);
    snapshot_out.assign((rec.user_set.size() + 7) / 8, 0);
    for (std::size_t j = 0; j < rec.user_set.size(); ++j)
      if (table_.test(rec.user_set.indices[j]))
        snapshot_out[j >> 3] |= std::uint8_t(1) << (j & 7);
    const auto now = std::chrono::steady_clock::now();
    session_.emplace(LiveSession{user, now, now + cfg_.session_deadline,
                                 BitTable::WriteGuard(table_)});
    return std::nullopt;  // session live, snapshot follows
  }

  ComplaintCode finish_complaint(const std::string& user, std::uint64_t index_or_abort) {
    std::lock_guard<std::mutex> lk(mu_);
    if (!session_ || session_->user != user)
      return ComplaintCode::Timeout;  // reaped, or index without a session
    if (std::chrono::steady_clock::now() > session_->deadline) {
      end_session(ComplaintCode::Timeout);
      return ComplaintCode::Timeout;
    }
    if (index_or_abort == kComplaintAbortMarker) {
      end_session(ComplaintCode::AbortAck);  // abort never consumes quota
      return ComplaintCode::AbortAck;
    }
    UserRecord& rec = users_.at(user);
    ComplaintCode code;
    if (server_validate_index(table_, rec.user_set, index_or_abort)) {
      ++complaint_total_;
      ++rec.complaints_used;
      code = ComplaintCode::Accepted;
    } else {
      ++rec.complaints_used;  // malformed clients pay quota
      code = ComplaintCode::InvalidIndex;
    }
    end_session(code);
    return code;
  }

  void reaper_loop() {
    std::unique_lock<std::mutex> lk(mu_);
    while (!stopping_) {
      stop_cv_.wait_for(lk, std::chrono::milliseconds(25));
      if (session_ && std::chrono::steady_clock::now() > session_->deadline)
        end_session(ComplaintCode::Timeout);
    }
  }

  void epoch_loop() {
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (stop_cv_.wait_for(lk, cfg_.epoch_length, [&] { return stopping_.load(); })) return;
      }
      epoch_reset();
    }
  }

  // ---- request handling ----

  void accept_loop() {
    for (;;) {
      std::unique_ptr<TcpStream> conn = listener_->accept();
      if (!conn) return;
      if (stopping_.load()) return;  // raced with stop(); drop the connection
      std::lock_guard<std::mutex> lk(conns_mu_);
      const std::uint64_t id = next_conn_id_++;
      open_conns_.emplace(id, conn.get());
      conn_threads_.emplace_back(
          [this, id, c = std::move(conn)]() mutable { serve_connection(id, std::move(c)); });
    }
  }

  void record_frame(std::uint64_t conn_id, bool inbound, MsgType type, std::size_t size) {
    if (!cfg_.record_transcripts) return;
    std::lock_guard<std::mutex> lk(mu_);
    transcripts_[conn_id].push_back({inbound, type, size});
  }

  void respond(std::uint64_t conn_id, Stream& s, MsgType type, ByteView payload) {
    record_frame(conn_id, false, type, payload.size());
    write_frame(s, type, payload);
  }

  void serve_connection(std::uint64_t conn_id, std::unique_ptr<TcpStream> stream) {
    std::string user;
    try {
      std::optional<Hello> hello = read_hello(*stream);
      bool ok = false;
      if (hello) {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = users_.find(hello->user_id);
        ok = it != users_.end() &&
             sha3_256(ByteView{it->second.auth_token}) == hello->token_hash;
      }
      const std::uint8_t status = ok ? kHelloOk : kHelloReject;
      stream->write_all(&status, 1);
      if (!ok) throw StreamClosed("authentication rejected");
      user = hello->user_id;
      for (;;) {
        Frame f = read_frame(*stream);
        record_frame(conn_id, true, f.type, f.payload.size());
        dispatch(conn_id, *stream, user, f);
      }
    } catch (const StreamClosed&) {
      // normal disconnect path
    } catch (const std::exception&) {
      // malformed traffic; drop the connection
    }
    // a client that vanished mid-session is handled by the reaper
    std::lock_guard<std::mutex> lk(conns_mu_);
    open_conns_.erase(conn_id);
  }

  void dispatch(std::uint64_t conn_id, Stream& stream, const std::string& user, const Frame& f) {
    switch (f.type) {
      case MsgType::OriginateReq: {
        if (f.payload.size() != 32) throw StreamClosed("bad originate payload");
        Digest h;
        std::copy_n(f.payload.data(), 32, h.begin());
        // keys are immutable after setup; crypto runs outside the state lock
        auto [e, sig] = server_issue_tag(keys_, user, h);
        Bytes resp;
        resp.reserve(2 + e.size() + sig.size());
        put_u16be(resp, static_cast<std::uint16_t>(e.size()));
        resp.insert(resp.end(), e.begin(), e.end());
        resp.insert(resp.end(), sig.begin(), sig.end());
        respond(conn_id, stream, MsgType::OriginateResp, ByteView{resp});
        break;
      }
      case MsgType::ComplainBegin: {
        Bytes snapshot;
        std::optional<ComplaintCode> reject = begin_complaint(user, snapshot);
        if (reject) {
          const std::uint8_t code = static_cast<std::uint8_t>(*reject);
          respond(conn_id, stream, MsgType::ComplainResult, ByteView{&code, 1});
        } else {
          respond(conn_id, stream, MsgType::ComplainSnapshot, ByteView{snapshot});
        }
        break;
      }
      case MsgType::ComplainIndex: {
        if (f.payload.size() != 8) throw StreamClosed("bad complaint index payload");
        const ComplaintCode code = finish_complaint(user, get_u64be(f.payload.data()));
        const std::uint8_t byte = static_cast<std::uint8_t>(code);
        respond(conn_id, stream, MsgType::ComplainResult, ByteView{&byte, 1});
        break;
      }
      case MsgType::AuditReq: {
        if (f.payload.size() < 2) throw StreamClosed("bad audit payload");
        const std::size_t tag_len = get_u16be(f.payload.data());
        if (f.payload.size() < 2 + tag_len) throw StreamClosed("bad audit payload");
        const ByteView tag_bytes{f.payload.data() + 2, tag_len};
        const ByteView message{f.payload.data() + 2 + tag_len,
                               f.payload.size() - 2 - tag_len};
        respond_audit(conn_id, stream, tag_bytes, message);
        break;
      }
      case MsgType::TableSyncReq: {
        Bytes snap;
        {
          std::lock_guard<std::mutex> lk(mu_);
          snap = table_.serialize();
        }
        respond(conn_id, stream, MsgType::TableSyncResp, ByteView{snap});
        break;
      }
      case MsgType::EpochInfo: {
        EpochInfo info;
        {
          std::lock_guard<std::mutex> lk(mu_);
          info.epoch_id = epoch_id_;
          info.params = params_;
          info.quota_limit = cfg_.quota_limit;
          info.table_ones = table_.ones();
          info.derive_key = keys_.derive_key();
          info.server_pubkey = keys_.sign_pub();
        }
        const Bytes payload = encode_epoch_info(info);
        respond(conn_id, stream, MsgType::EpochInfo, ByteView{payload});
        break;
      }
      default:
        throw StreamClosed("unknown frame type");
    }
  }

  void respond_audit(std::uint64_t conn_id, Stream& stream, ByteView tag_bytes,
                     ByteView message) {
    Bytes resp;
    std::optional<Tag> tag = Tag::parse(tag_bytes);
    std::optional<std::string> originator;
    if (tag) originator = audit_open(keys_, *tag, message);
    if (!originator) {
      resp.push_back(static_cast<std::uint8_t>(AuditCode::InvalidTag));
    } else if (cfg_.audit_recheck_count && !audit_recheck(tag_bytes)) {
      resp.push_back(static_cast<std::uint8_t>(AuditCode::BelowThreshold));
    } else {
      resp.push_back(static_cast<std::uint8_t>(AuditCode::Ok));
      resp.insert(resp.end(), originator->begin(), originator->end());
      std::lock_guard<std::mutex> lk(mu_);
      audit_log_.emplace_back(Bytes(tag_bytes.begin(), tag_bytes.end()), *originator);
    }
    respond(conn_id, stream, MsgType::AuditResp, ByteView{resp});
  }

  /// Deployment hook, off by default: the audit algorithm places TestCount on
  /// the client, so the server normally opens any valid tag it receives.
  bool audit_recheck(ByteView tag_bytes) {
    std::lock_guard<std::mutex> lk(mu_);
    const IndexSet item = derive_item_set(tag_bytes, params_);
    const std::int64_t tau =
        tipping_point(params_.s, params_.u, params_.v, table_.ones(), params_.t);
    return test_count(table_, item, tau);
  }

  struct LiveSession {
    std::string user;
    std::chrono::steady_clock::time_point granted;
    std::chrono::steady_clock::time_point deadline;
    BitTable::WriteGuard guard;
  };

  // epoch state
  mutable std::mutex mu_;
  ServerConfig cfg_;
  bool set_up_ = false;
  std::atomic<bool> stopping_ = false;
  ServerKeys keys_;
  CcbfParams params_;
  std::unordered_map<std::string, UserRecord> users_;
  BitTable table_;
  std::uint64_t epoch_id_ = 0;
  std::uint64_t complaint_total_ = 0;

  // session serialization
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ticket_ = 0;
  std::optional<LiveSession> session_;
  std::condition_variable session_cv_;
  std::condition_variable stop_cv_;
  std::vector<SessionLogEntry> session_log_;
  std::vector<std::pair<Bytes, std::string>> audit_log_;
  std::unordered_map<std::uint64_t, std::vector<FrameRecord>> transcripts_;

  // networking
  std::unique_ptr<TcpListener> listener_;
  std::thread accept_thread_;
  std::thread reaper_thread_;
  std::thread epoch_thread_;
  std::mutex conns_mu_;
  std::unordered_map<std::uint64_t, TcpStream*> open_conns_;
  std::uint64_t next_conn_id_ = 0;
  std::vector<std::thread> conn_threads_;
};

}  // namespace facts

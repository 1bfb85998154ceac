// facts-client: user-side CLI. Subcommands originate, forward, recv-verify,
// complain, and audit-check; tags travel as hex strings or files.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "facts/client.hpp"

namespace {

using namespace facts;

struct Common {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string user_id;
  std::string token_hex;
  std::string user_db;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--host", c.host, "server host")->capture_default_str();
  cmd->add_option("--port", c.port, "server port");
  cmd->add_option("--id", c.user_id, "user id");
  cmd->add_option("--token", c.token_hex, "bearer token (64 hex chars)");
  cmd->add_option("--user-db", c.user_db, "credentials file from facts-server ('id hex' lines)");
}

SymmetricKey resolve_token(const Common& c) {
  std::string hex = c.token_hex;
  if (hex.empty() && !c.user_db.empty()) {
    std::ifstream db(c.user_db);
    std::string id, h;
    while (db >> id >> h)
      if (id == c.user_id) {
        hex = h;
        break;
      }
  }
  if (hex.empty())
    throw ParameterError("no token for user " + c.user_id + " (use --token or --user-db)");
  const Bytes raw = from_hex(hex);
  if (raw.size() != 32) throw ParameterError("token must be 32 bytes of hex");
  SymmetricKey key{};
  std::copy(raw.begin(), raw.end(), key.begin());
  return key;
}

FactsClient make_client(const Common& c) {
  if (c.port == 0) throw ParameterError("--port is required");
  if (c.user_id.empty()) throw ParameterError("--id is required");
  ClientConfig cfg;
  cfg.host = c.host;
  cfg.port = c.port;
  cfg.user_id = c.user_id;
  cfg.auth_token = resolve_token(c);
  return FactsClient(cfg);
}

Bytes read_message(const std::string& inline_msg, const std::string& file) {
  if (!file.empty()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ParameterError("cannot read message file " + file);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string s = ss.str();
    return Bytes(s.begin(), s.end());
  }
  return Bytes(inline_msg.begin(), inline_msg.end());
}

Bytes read_tag_arg(const std::string& hex_or_file) {
  std::ifstream in(hex_or_file, std::ios::binary);
  std::string text = hex_or_file;
  if (in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  }
  return from_hex(text);
}

void emit_tag(const Bytes& tag_bytes, const std::string& out_file) {
  const std::string hex = to_hex(ByteView{tag_bytes});
  if (!out_file.empty()) {
    std::ofstream out(out_file);
    if (!out) throw ParameterError("cannot write tag file " + out_file);
    out << hex << "\n";
  }
  std::cout << "tag: " << hex << "\n";
}

InboxEntry entry_for(const Bytes& tag_bytes, const Bytes& message) {
  auto tag = Tag::parse(ByteView{tag_bytes});
  if (!tag) throw ParameterError("malformed tag bytes");
  return InboxEntry{"", *tag, tag_bytes, message};
}

const char* code_name(ComplaintCode c) {
  switch (c) {
    case ComplaintCode::Accepted: return "accepted";
    case ComplaintCode::InvalidIndex: return "rejected (invalid index)";
    case ComplaintCode::Quota: return "rejected (quota exhausted)";
    case ComplaintCode::EpochFull: return "rejected (epoch cap reached)";
    case ComplaintCode::Timeout: return "rejected (session timed out)";
    case ComplaintCode::AbortAck: return "aborted (no settable location)";
  }
  return "unknown";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FACTS client"};
  app.require_subcommand(1);

  Common common;
  std::string message, message_file, tag_arg, tag_out, pubkey_hex;

  auto* originate = app.add_subcommand("originate", "originate a message and print its tag");
  add_common(originate, common);
  originate->add_option("--message", message, "message text");
  originate->add_option("--message-file", message_file, "message file");
  originate->add_option("--tag-out", tag_out, "write the tag hex here");

  auto* forward = app.add_subcommand(
      "forward", "forward a received message: runs the origination exchange, discards it, "
                 "and re-emits the original tag");
  add_common(forward, common);
  forward->add_option("--tag", tag_arg, "original tag (hex or file)")->required();
  forward->add_option("--message", message, "message text");
  forward->add_option("--message-file", message_file, "message file");
  forward->add_option("--tag-out", tag_out, "write the forwarded tag hex here");

  auto* recv = app.add_subcommand("recv-verify", "verify a received (tag, message) pair");
  add_common(recv, common);
  recv->add_option("--tag", tag_arg, "tag (hex or file)")->required();
  recv->add_option("--message", message, "message text");
  recv->add_option("--message-file", message_file, "message file");
  recv->add_option("--pubkey", pubkey_hex, "server public key hex (offline verification)");

  auto* complain = app.add_subcommand("complain", "complain about a received message");
  add_common(complain, common);
  complain->add_option("--tag", tag_arg, "tag (hex or file)")->required();

  auto* audit = app.add_subcommand("audit-check",
                                   "run TestCount against the tipping point and submit an "
                                   "audit when past the threshold");
  add_common(audit, common);
  audit->add_option("--tag", tag_arg, "tag (hex or file)")->required();
  audit->add_option("--message", message, "message text");
  audit->add_option("--message-file", message_file, "message file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (originate->parsed()) {
      FactsClient client = make_client(common);
      client.connect();
      const Bytes msg = read_message(message, message_file);
      const Tag tag = client.originate(ByteView{msg});
      emit_tag(tag.serialize(), tag_out);
      return 0;
    }
    if (forward->parsed()) {
      FactsClient client = make_client(common);
      client.connect();
      const Bytes msg = read_message(message, message_file);
      const Bytes original = read_tag_arg(tag_arg);
      (void)client.originate(ByteView{msg});  // cover exchange, output discarded
      emit_tag(original, tag_out);            // the original tag travels verbatim
      return 0;
    }
    if (recv->parsed()) {
      const Bytes msg = read_message(message, message_file);
      const Bytes tag_bytes = read_tag_arg(tag_arg);
      const auto tag = Tag::parse(ByteView{tag_bytes});
      if (!tag) {
        std::cout << "reject (malformed tag)\n";
        return 1;
      }
      PublicKey pub{};
      if (!pubkey_hex.empty()) {
        const Bytes raw = from_hex(pubkey_hex);
        if (raw.size() != 32) throw ParameterError("pubkey must be 32 bytes of hex");
        std::copy(raw.begin(), raw.end(), pub.begin());
      } else {
        FactsClient client = make_client(common);
        client.connect();
        pub = client.epoch().server_pubkey;
      }
      const bool ok = verify_tag(pub, *tag, ByteView{msg});
      std::cout << (ok ? "accept" : "reject") << "\n";
      return ok ? 0 : 1;
    }
    if (complain->parsed()) {
      FactsClient client = make_client(common);
      client.connect();
      const InboxEntry entry = entry_for(read_tag_arg(tag_arg), {});
      const ComplainResult r = client.complain(entry);
      std::cout << code_name(r.code);
      if (r.sent_index) std::cout << " (index " << *r.sent_index << ")";
      std::cout << "\n";
      return r.code == ComplaintCode::Accepted || r.code == ComplaintCode::AbortAck ? 0 : 1;
    }
    if (audit->parsed()) {
      FactsClient client = make_client(common);
      client.connect();
      const InboxEntry entry = entry_for(read_tag_arg(tag_arg), read_message(message, message_file));
      const AuditCheckResult res = client.check_and_audit(entry);
      if (!res.audited) {
        std::cout << "below-threshold: count " << res.observed_count << " < tau " << res.tau
                  << "\n";
        return 1;
      }
      if (res.server_code == AuditCode::Ok)
        std::cout << "audited: originator " << res.originator << "\n";
      else
        std::cout << "audit rejected by server (code " << int(res.server_code) << ")\n";
      return res.server_code == AuditCode::Ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

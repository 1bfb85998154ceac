// facts-server: runs the complaint service. Configuration comes from flags
// or a config file (--config, INI "key=value" lines matching the long flag
// names); flags override the file.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "facts/server.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FACTS complaint server"};
  app.set_config("--config", "", "config file (INI key=value)");

  facts::ServerConfig cfg;
  std::uint64_t users = 100;
  std::uint64_t n = 100000;
  std::uint32_t t = 100;
  std::uint32_t quota = 10;
  std::uint32_t lambda = 10;
  std::uint32_t deadline_ms = 5000;
  std::uint32_t epoch_seconds = 0;
  std::string user_db = "facts_users.txt";
  bool audit_recheck = false;

  app.add_option("--listen", cfg.listen_addr, "listen address")->capture_default_str();
  app.add_option("--port", cfg.port, "listen port (0 = ephemeral)")->capture_default_str();
  app.add_option("--users", users, "number of registered users")->capture_default_str();
  app.add_option("--n", n, "per-epoch complaint cap")->capture_default_str();
  app.add_option("--t", t, "audit threshold")->capture_default_str();
  app.add_option("--quota", quota, "per-user complaints per epoch (L)")
      ->capture_default_str();
  app.add_option("--lambda", lambda, "statistical security parameter")->capture_default_str();
  app.add_option("--deadline-ms", deadline_ms, "complaint session deadline")
      ->capture_default_str();
  app.add_option("--epoch-seconds", epoch_seconds,
                 "automatic epoch length (0 = manual resets only)")
      ->capture_default_str();
  app.add_option("--user-db", user_db, "file to write user credentials to")
      ->capture_default_str();
  app.add_flag("--audit-recheck", audit_recheck,
               "re-run TestCount server-side before opening audited tags");

  CLI11_PARSE(app, argc, argv);

  cfg.user_count = users;
  cfg.n = n;
  cfg.t = t;
  cfg.quota_limit = quota;
  cfg.lambda_stat = lambda;
  cfg.session_deadline = std::chrono::milliseconds(deadline_ms);
  cfg.epoch_length = std::chrono::seconds(epoch_seconds);
  cfg.audit_recheck_count = audit_recheck;

  try {
    facts::FactsServer server(cfg);
    server.start();
    {
      std::ofstream db(user_db);
      if (!db) {
        std::cerr << "cannot write user db: " << user_db << "\n";
        return 1;
      }
      for (const auto& [id, token] : server.user_credentials())
        db << id << " " << facts::to_hex(facts::ByteView{token}) << "\n";
    }
    const facts::CcbfParams p = server.params();
    std::cout << "facts-server listening on " << cfg.listen_addr << ":" << server.port()
              << "\n"
              << "params: s=" << p.s << " bits (" << (p.s + 7) / 8 << " bytes), u=" << p.u
              << ", v=" << p.v << ", n=" << p.n << ", t=" << p.t << ", lambda="
              << p.lambda_stat << ", L=" << quota << "\n"
              << "credentials written to " << user_db << std::endl;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    std::cout << "shutting down\n";
    server.stop();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

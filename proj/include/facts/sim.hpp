#pragma once

#include <cmath>
#include <fstream>
#include <future>
#include <random>
#include <sstream>
#include <unordered_map>

#include "facts/ccbf.hpp"
#include "facts/client.hpp"
#include "facts/server.hpp"
#include "facts/tipping.hpp"

namespace facts::sim {

// Experiment harness: Monte Carlo oracles and reproductions of the accuracy,
// tail-bound, and overhead measurements. All randomness flows from explicit
// seeds; identical seeds give byte-identical CSV output.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream_id) {
  std::uint64_t s = root ^ (0xa0761d6478bd642full * (stream_id + 1));
  return splitmix64(s);
}

/// Uniform distinct-subset sampling with a reusable mark array (Floyd's
/// algorithm). Output is unsorted.
class SubsetSampler {
 public:
  explicit SubsetSampler(std::uint64_t ground_size) : mark_(ground_size, 0) {}

  template <class URBG>
  void sample(std::uint64_t count, URBG& rng, std::vector<std::uint64_t>& out) {
    const std::uint64_t s = mark_.size();
    if (count > s) throw ParameterError("SubsetSampler: count > ground size");
    out.clear();
    for (std::uint64_t j = s - count; j < s; ++j) {
      const std::uint64_t r = uniform_below(rng, j + 1);
      if (mark_[r]) {
        mark_[j] = 1;
        out.push_back(j);
      } else {
        mark_[r] = 1;
        out.push_back(r);
      }
    }
    for (std::uint64_t i : out) mark_[i] = 0;
  }

 private:
  std::vector<std::uint8_t> mark_;
};

// ---- Monte Carlo tipping oracle ----

/// Brute-force oracle for the tipping point: fill m uniformly random bits,
/// then run t real increments on one item by fresh uniform users, and return
/// the mean filled item-slot count. Deliberately built from the CCBF
/// primitives only (explicit user sets fed to increment()); none of the
/// p/q/R machinery appears on this path.
inline double mc_tipping_oracle(std::uint64_t s, std::uint32_t u, std::uint32_t v,
                                std::uint64_t m, std::uint32_t t, std::uint64_t runs,
                                std::uint64_t seed) {
  if (m > s || u > s || v > s) throw ParameterError("mc_tipping_oracle: sets exceed table");
  if (runs == 0) throw ParameterError("mc_tipping_oracle: runs must be positive");
  std::mt19937_64 rng(seed);
  BitTable table(s);
  SubsetSampler sampler(s);
  std::vector<std::uint64_t> background;
  IndexSet user{SetKind::User, {}, {}};
  IndexSet item{SetKind::Item, {}, {}};
  double total = 0.0;
  for (std::uint64_t run = 0; run < runs; ++run) {
    table.clear_all();
    sampler.sample(m, rng, background);
    for (std::uint64_t i : background) table.set(i);
    sampler.sample(v, rng, item.indices);
    std::sort(item.indices.begin(), item.indices.end());
    {
      BitTable::WriteGuard guard(table);
      for (std::uint32_t k = 0; k < t; ++k) {
        sampler.sample(u, rng, user.indices);
        std::sort(user.indices.begin(), user.indices.end());
        increment(table, user, item, rng);  // abort counts as no fill
      }
    }
    total += double(item_fill_count(table, item));
  }
  return total / double(runs);
}

// ---- exact lazy complaints for the large-scale experiments ----
//
// A complaint by a fresh uniform user influences the experiment only through
// which unfilled target slots it can reach and through the one bit it flips.
// Both are sampled exactly without materializing the u-element user set:
// membership of the unfilled target positions in the user set is a sequential
// hypergeometric reveal (each next position is in the set with probability
// u_left/s_left), and when no target slot is reachable the written bit is a
// uniform table zero outside the target item set, which is the marginal of
// "uniform element of the user's remaining settable slots". Abort would need
// all u user slots filled, which is beyond astronomically unlikely at the
// densities the experiments run at, and is ignored.

struct LazyTarget {
  std::vector<std::uint64_t> positions;  // sorted item-set positions
  std::vector<std::uint64_t> unfilled;   // subset of positions still zero

  std::int64_t fill_count() const {
    return std::int64_t(positions.size()) - std::int64_t(unfilled.size());
  }
};

/// Seeds `count` background complaints: each lands on a uniformly random
/// zero bit (the net effect of a fresh user complaining on a fresh item).
template <class URBG>
void background_fill(BitTable& table, std::uint64_t count, URBG& rng) {
  for (std::uint64_t i = 0; i < count; ++i) {
    for (int tries = 0;; ++tries) {
      const std::uint64_t idx = uniform_below(rng, table.size());
      if (!table.test(idx)) {
        table.set(idx);
        break;
      }
      if (tries > 100000) throw std::runtime_error("background_fill: table too full");
    }
  }
}

/// One complaint on the target by a fresh simulated user. Returns true when
/// an unfilled target slot was written.
template <class URBG>
bool lazy_complaint(BitTable& table, LazyTarget& target, std::uint32_t u, URBG& rng,
                    std::vector<std::size_t>& hit_scratch) {
  const std::uint64_t s = table.size();
  hit_scratch.clear();
  std::uint64_t u_left = u;
  std::uint64_t s_left = s;
  for (std::size_t j = 0; j < target.unfilled.size() && u_left > 0; ++j, --s_left) {
    if (uniform_below(rng, s_left) < u_left) {
      hit_scratch.push_back(j);
      --u_left;
    }
  }
  if (!hit_scratch.empty()) {
    const std::size_t slot = hit_scratch[uniform_below(rng, hit_scratch.size())];
    const std::uint64_t pos = target.unfilled[slot];
    table.set(pos);
    target.unfilled[slot] = target.unfilled.back();
    target.unfilled.pop_back();
    return true;
  }
  for (int tries = 0;; ++tries) {
    const std::uint64_t idx = uniform_below(rng, s);
    if (!table.test(idx) &&
        !std::binary_search(target.positions.begin(), target.positions.end(), idx)) {
      table.set(idx);
      return false;
    }
    if (tries > 100000) throw std::runtime_error("lazy_complaint: table too full");
  }
}

// ---- accuracy experiment ----

struct ExperimentConfig {
  std::uint64_t n = 100000;
  std::vector<std::uint32_t> thresholds = {100, 316, 1000};
  std::uint32_t lambda_stat = 10;
  std::vector<std::uint64_t> background_levels;  // empty: {0, n/4, n/2, 3n/4, n-2t}
  std::uint32_t trials = 1000;
  std::uint64_t seed = 1;

  void validate() const {
    if (trials < 1) throw ParameterError("ExperimentConfig: trials >= 1");
    if (thresholds.empty()) throw ParameterError("ExperimentConfig: no thresholds");
    for (std::uint64_t b : background_levels)
      if (b > n) throw ParameterError("ExperimentConfig: background level above n");
  }
};

struct AccuracyRow {
  std::uint32_t t = 0;
  std::uint64_t background = 0;
  double mean = 0, stddev = 0, rel_std_pct = 0;
};

inline std::vector<std::uint64_t> default_background_levels(std::uint64_t n, std::uint32_t t) {
  return {0, n / 4, n / 2, 3 * n / 4, n - std::min<std::uint64_t>(n, 2 * std::uint64_t(t))};
}

/// Complaints-to-audit for one (params, background) level: per trial, seed
/// the table, then complain on one fresh target item with fresh users until
/// TestCount fires against the tipping point at the current fill m.
template <class URBG>
std::uint64_t complaints_to_audit_trial(const CcbfParams& p, const TippingCurve& curve,
                                        std::unordered_map<std::uint64_t, std::int64_t>& tau_cache,
                                        BitTable& table, SubsetSampler& sampler,
                                        std::uint64_t background, URBG& rng) {
  table.clear_all();
  background_fill(table, background, rng);
  LazyTarget target;
  sampler.sample(p.v, rng, target.positions);
  std::sort(target.positions.begin(), target.positions.end());
  target.unfilled.clear();
  for (std::uint64_t pos : target.positions)
    if (!table.test(pos)) target.unfilled.push_back(pos);
  std::vector<std::size_t> scratch;
  const std::uint64_t cap = 20ull * p.t + 1000;  // runaway guard
  for (std::uint64_t k = 1; k <= cap; ++k) {
    lazy_complaint(table, target, p.u, rng, scratch);
    const std::uint64_t m = table.ones();
    auto it = tau_cache.find(m);
    if (it == tau_cache.end()) it = tau_cache.emplace(m, curve.tau(m)).first;
    if (target.fill_count() >= it->second) {
      // cross-check the incremental count against the real TestCount read
      IndexSet item{SetKind::Item, {}, target.positions};
      if (!test_count(table, item, it->second))
        throw std::logic_error("complaints_to_audit_trial: count bookkeeping diverged");
      return k;
    }
  }
  throw std::runtime_error("complaints_to_audit_trial: audit never fired");
}

inline std::vector<AccuracyRow> run_accuracy(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<AccuracyRow> rows;
  std::uint64_t level_id = 0;
  for (std::uint32_t t : cfg.thresholds) {
    const CcbfParams p = choose_params(cfg.n, t, cfg.lambda_stat);
    const TippingCurve curve(p.s, p.u, p.v, p.t);
    std::unordered_map<std::uint64_t, std::int64_t> tau_cache;
    const std::vector<std::uint64_t> levels =
        cfg.background_levels.empty() ? default_background_levels(cfg.n, t)
                                      : cfg.background_levels;
    BitTable table(p.s);
    SubsetSampler sampler(p.s);
    for (std::uint64_t background : levels) {
      std::mt19937_64 rng(derive_seed(cfg.seed, level_id++));
      double sum = 0, sum_sq = 0;
      for (std::uint32_t trial = 0; trial < cfg.trials; ++trial) {
        const double k = double(
            complaints_to_audit_trial(p, curve, tau_cache, table, sampler, background, rng));
        sum += k;
        sum_sq += k * k;
      }
      AccuracyRow row;
      row.t = t;
      row.background = background;
      row.mean = sum / cfg.trials;
      const double var = std::max(0.0, sum_sq / cfg.trials - row.mean * row.mean);
      row.stddev = std::sqrt(var);
      row.rel_std_pct = row.mean > 0 ? 100.0 * row.stddev / row.mean : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_accuracy_csv(std::ostream& os, const std::vector<AccuracyRow>& rows) {
  os << "t,background,mean,std,rel_std_pct\n";
  char buf[160];
  for (const AccuracyRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%u,%llu,%.6f,%.6f,%.6f\n", r.t,
                  static_cast<unsigned long long>(r.background), r.mean, r.stddev,
                  r.rel_std_pct);
    os << buf;
  }
}

inline std::vector<AccuracyRow> parse_accuracy_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("accuracy CSV: empty input");
  if (line != "t,background,mean,std,rel_std_pct")
    throw ParameterError("accuracy CSV: unexpected header: " + line);
  std::vector<AccuracyRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    AccuracyRow r;
    unsigned long long bg = 0;
    if (std::sscanf(line.c_str(), "%u,%llu,%lf,%lf,%lf", &r.t, &bg, &r.mean, &r.stddev,
                    &r.rel_std_pct) != 5)
      throw ParameterError("accuracy CSV: bad row: " + line);
    r.background = bg;
    rows.push_back(r);
  }
  if (rows.empty()) throw ParameterError("accuracy CSV: no data rows");
  return rows;
}

// ---- tail-bound experiment ----

struct TailCheckResult {
  std::uint32_t t = 0, lambda_stat = 0;
  std::uint32_t trials = 0;
  std::uint64_t fp_arm_complaints = 0;  // floor(t - 2.1 sqrt(lambda t))
  std::uint64_t fn_arm_complaints = 0;  // ceil(1.1t + 0.4 lambda + 0.7 sqrt(lambda t))
  double fp_rate = 0;                   // fraction of trials TestCount wrongly fired
  double fn_rate = 0;                   // fraction of trials TestCount wrongly stayed false
};

/// Empirical check of the false-positive / false-negative tail bounds: issue the
/// boundary complaint count on a target, then evaluate TestCount once.
inline TailCheckResult run_tail_check(std::uint32_t t, std::uint32_t lambda_stat,
                                      std::uint32_t trials, std::uint64_t n,
                                      std::uint64_t background, std::uint64_t seed) {
  const CcbfParams p = choose_params(n, t, lambda_stat);
  const TailThresholds th = tail_thresholds(t, lambda_stat);
  TailCheckResult res;
  res.t = t;
  res.lambda_stat = lambda_stat;
  res.trials = trials;
  res.fp_arm_complaints = th.fp_meaningful()
                              ? std::uint64_t(std::floor(th.fp_safe_count))
                              : 0;
  res.fn_arm_complaints = std::uint64_t(std::ceil(th.fn_safe_count));
  const TippingCurve curve(p.s, p.u, p.v, p.t);
  std::unordered_map<std::uint64_t, std::int64_t> tau_cache;
  BitTable table(p.s);
  SubsetSampler sampler(p.s);
  std::vector<std::size_t> scratch;

  auto run_arm = [&](std::uint64_t complaints, std::uint64_t arm_seed) {
    std::mt19937_64 rng(arm_seed);
    std::uint64_t fired = 0;
    for (std::uint32_t trial = 0; trial < trials; ++trial) {
      table.clear_all();
      background_fill(table, background, rng);
      LazyTarget target;
      sampler.sample(p.v, rng, target.positions);
      std::sort(target.positions.begin(), target.positions.end());
      target.unfilled.clear();
      for (std::uint64_t pos : target.positions)
        if (!table.test(pos)) target.unfilled.push_back(pos);
      for (std::uint64_t k = 0; k < complaints; ++k)
        lazy_complaint(table, target, p.u, rng, scratch);
      const std::uint64_t m = table.ones();
      auto it = tau_cache.find(m);
      if (it == tau_cache.end()) it = tau_cache.emplace(m, curve.tau(m)).first;
      if (target.fill_count() >= it->second) ++fired;
    }
    return fired;
  };

  res.fp_rate = double(run_arm(res.fp_arm_complaints, derive_seed(seed, 0))) / trials;
  const std::uint64_t fn_fired = run_arm(res.fn_arm_complaints, derive_seed(seed, 1));
  res.fn_rate = double(trials - fn_fired) / trials;
  return res;
}

// ---- throughput experiment ----

struct ThroughputConfig {
  std::uint32_t clients = 8;
  std::uint32_t complaints_per_client = 100;
  std::chrono::milliseconds one_way_latency{0};
  double bandwidth_bits_per_sec = 0.0;  // 0: unlimited
  std::uint64_t n = 20000;
  std::uint32_t t = 1000;
  std::uint32_t quota_limit = 1000;
  std::uint32_t lambda_stat = 10;
  std::chrono::milliseconds deadline{5000};
};

struct ThroughputReport {
  std::uint64_t accepted = 0;
  std::uint64_t attempted = 0;
  double elapsed_s = 0;
  double complaints_per_sec = 0;
  double mean_snapshot_ms = 0;   // COMPLAIN_BEGIN sent -> snapshot received
  double mean_index_rtt_ms = 0;  // COMPLAIN_INDEX sent -> result received
  double originate_ms = 0;       // one ORIGINATE exchange round trip
  std::uint64_t snapshot_bytes = 0;
  double model_complaints_per_sec = 0;  // 1 / (2*latency + snapshot transfer)
};

/// Drives concurrent clients through complain flows against a real in-process
/// server, with optional injected latency/bandwidth on every client link.
inline ThroughputReport run_throughput(const ThroughputConfig& cfg) {
  ServerConfig scfg;
  scfg.user_count = cfg.clients;
  scfg.n = cfg.n;
  scfg.t = cfg.t;
  scfg.quota_limit = cfg.quota_limit;
  scfg.lambda_stat = cfg.lambda_stat;
  scfg.session_deadline = cfg.deadline;
  FactsServer server(scfg);
  server.start();
  const auto creds = server.user_credentials();
  const CcbfParams params = server.params();

  struct WorkerStats {
    std::uint64_t accepted = 0, attempted = 0;
    double snapshot_ms_total = 0, index_ms_total = 0;
    std::uint64_t timed = 0;
  };
  std::vector<WorkerStats> stats(cfg.clients);
  std::atomic<std::uint32_t> ready{0};
  std::atomic<bool> go{false};

  auto worker = [&](std::uint32_t wi) {
    ClientConfig ccfg;
    ccfg.host = "127.0.0.1";
    ccfg.port = server.port();
    ccfg.user_id = creds[wi].first;
    ccfg.auth_token = creds[wi].second;
    ccfg.one_way_delay =
        std::chrono::duration_cast<std::chrono::microseconds>(cfg.one_way_latency);
    ccfg.bandwidth_bits_per_sec = cfg.bandwidth_bits_per_sec;
    FactsClient client(ccfg);
    client.connect();
    EemsBus bus;
    // pre-build the inbox outside the timed window
    std::vector<InboxEntry> entries;
    for (std::uint32_t i = 0; i < cfg.complaints_per_client; ++i) {
      Bytes msg = {std::uint8_t(wi), std::uint8_t(i >> 8), std::uint8_t(i & 0xff)};
      client.send_msg(bus, client.id(), std::nullopt, ByteView{msg});
      if (!client.rcv_msg(bus)) throw std::runtime_error("run_throughput: self-delivery failed");
    }
    entries = client.inbox();
    ready.fetch_add(1);
    while (!go.load()) std::this_thread::yield();
    WorkerStats& st = stats[wi];
    for (const InboxEntry& e : entries) {
      ComplainTiming timing;
      const ComplainResult r = client.complain(e, &timing);
      ++st.attempted;
      if (r.code == ComplaintCode::Accepted) {
        ++st.accepted;
        st.snapshot_ms_total += timing.snapshot_ms;
        st.index_ms_total += timing.index_rtt_ms;
        ++st.timed;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(cfg.clients);
  for (std::uint32_t i = 0; i < cfg.clients; ++i) threads.emplace_back(worker, i);
  while (ready.load() < cfg.clients) std::this_thread::yield();
  const auto start = std::chrono::steady_clock::now();
  go.store(true);
  for (std::thread& th : threads) th.join();
  const auto end = std::chrono::steady_clock::now();

  ThroughputReport rep;
  for (const WorkerStats& st : stats) {
    rep.accepted += st.accepted;
    rep.attempted += st.attempted;
    rep.mean_snapshot_ms += st.snapshot_ms_total;
    rep.mean_index_rtt_ms += st.index_ms_total;
  }
  std::uint64_t timed = 0;
  for (const WorkerStats& st : stats) timed += st.timed;
  if (timed > 0) {
    rep.mean_snapshot_ms /= double(timed);
    rep.mean_index_rtt_ms /= double(timed);
  }
  rep.elapsed_s = std::chrono::duration<double>(end - start).count();
  rep.complaints_per_sec = rep.elapsed_s > 0 ? double(rep.accepted) / rep.elapsed_s : 0;
  rep.snapshot_bytes = (params.u + 7) / 8;

  // one origination exchange, measured on its own connection
  {
    ClientConfig ccfg;
    ccfg.host = "127.0.0.1";
    ccfg.port = server.port();
    ccfg.user_id = creds[0].first;
    ccfg.auth_token = creds[0].second;
    ccfg.one_way_delay =
        std::chrono::duration_cast<std::chrono::microseconds>(cfg.one_way_latency);
    ccfg.bandwidth_bits_per_sec = cfg.bandwidth_bits_per_sec;
    FactsClient client(ccfg);
    client.connect();
    const Bytes msg = {0x42};
    const auto t0 = std::chrono::steady_clock::now();
    (void)client.originate(ByteView{msg});
    const auto t1 = std::chrono::steady_clock::now();
    rep.originate_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }

  // two-round analytic model of the serialized locked session
  const double latency_s = std::chrono::duration<double>(cfg.one_way_latency).count();
  const double frame_bytes = double(5 + rep.snapshot_bytes);
  const double transfer_s =
      cfg.bandwidth_bits_per_sec > 0 ? 8.0 * frame_bytes / cfg.bandwidth_bits_per_sec : 0.0;
  const double denom = 2.0 * latency_s + transfer_s;
  rep.model_complaints_per_sec = denom > 0 ? 1.0 / denom : 0.0;

  server.stop();
  return rep;
}

// ---- plotting ----

/// Writes per-threshold data files plus a gnuplot script with the two
/// panels: mean complaints-to-audit with error bars, and relative standard
/// deviation, both against background complaints.
inline void emit_plots(const std::vector<AccuracyRow>& rows, const std::string& out_dir) {
  if (rows.empty()) throw ParameterError("emit_plots: no rows");
  std::vector<std::uint32_t> thresholds;
  for (const AccuracyRow& r : rows)
    if (thresholds.empty() || thresholds.back() != r.t) thresholds.push_back(r.t);
  for (std::uint32_t t : thresholds) {
    std::ofstream dat(out_dir + "/accuracy_t" + std::to_string(t) + ".dat");
    if (!dat) throw std::runtime_error("emit_plots: cannot write data file");
    dat << "# background mean std rel_std_pct\n";
    char buf[160];
    for (const AccuracyRow& r : rows) {
      if (r.t != t) continue;
      std::snprintf(buf, sizeof(buf), "%llu %.6f %.6f %.6f\n",
                    static_cast<unsigned long long>(r.background), r.mean, r.stddev,
                    r.rel_std_pct);
      dat << buf;
    }
  }
  std::ofstream gp(out_dir + "/plot_accuracy.gp");
  if (!gp) throw std::runtime_error("emit_plots: cannot write gnuplot script");
  gp << "set terminal pngcairo size 1200,500\n"
     << "set output 'accuracy.png'\n"
     << "set multiplot layout 1,2\n"
     << "set xlabel 'background complaints'\n"
     << "set ylabel 'complaints to audit'\n"
     << "set key top left\n"
     << "plot ";
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    gp << (i ? ", " : "") << "'accuracy_t" << thresholds[i]
       << ".dat' using 1:2:3 with yerrorlines title 't=" << thresholds[i] << "'";
  gp << "\nset ylabel 'relative std dev (%)'\nplot ";
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    gp << (i ? ", " : "") << "'accuracy_t" << thresholds[i]
       << ".dat' using 1:4 with linespoints title 't=" << thresholds[i] << "'";
  gp << "\nunset multiplot\n";
}

// ---- small statistics helpers ----

inline double chi_square_stat(const std::vector<std::uint64_t>& counts, double expected) {
  double stat = 0;
  for (std::uint64_t c : counts) {
    const double d = double(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

/// Wilson-Hilferty approximation of the chi-square quantile at the standard
/// normal quantile z (e.g. z = 3.0902 for the 0.999 quantile). Accurate to a
/// fraction of a percent for the dof sizes used here.
inline double chi_square_critical(std::uint64_t dof, double z) {
  const double d = double(dof);
  const double a = 2.0 / (9.0 * d);
  const double c = 1.0 - a + z * std::sqrt(a);
  return d * c * c * c;
}

constexpr double kZ999 = 3.0902323061678132;  // N(0,1) quantile at 0.999

}  // namespace facts::sim

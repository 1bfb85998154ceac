#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "facts/params.hpp"

namespace facts {

// Exact probabilistic machinery behind TestCount: intersection probabilities
// of random subsets, the per-increment fill probability p_w, the background
// distribution q_w, the expected-unfilled recurrence R_{w,k}, and the tipping
// point tau they combine into. Everything is plain double arithmetic over
// products of bounded factor ratios.

namespace detail {

/// Product of num[i] / den[j] factors, consuming greedily so the partial
/// product stays near 1 (multiply while <= 1, divide otherwise). Keeps
/// intermediate magnitudes inside double range even when one side alone
/// would underflow.
inline double ratio_product(const std::vector<double>& num, const std::vector<double>& den) {
  double r = 1.0;
  std::size_t i = 0, j = 0;
  while (i < num.size() || j < den.size()) {
    if (j >= den.size() || (r <= 1.0 && i < num.size()))
      r *= num[i++];
    else
      r /= den[j++];
  }
  return r;
}

}  // namespace detail

/// Pr(|S n T| = k) for independent uniform subsets with |S|=a, |T|=b of a
/// size-s ground set: falling(a,k) falling(b,k) falling(s-a,b-k) /
/// (falling(s,b) k!). O(b) bounded-ratio product.
inline double intersection_prob(std::uint64_t s, std::uint64_t a, std::uint64_t b,
                                std::uint64_t k) {
  if (!(k <= b && b <= a && a <= s))
    throw ParameterError("intersection_prob: need k <= b <= a <= s");
  if (b - k > s - a) return 0.0;  // pigeonhole: too few elements outside S
  std::vector<double> num, den;
  num.reserve(b + k);
  den.reserve(b + k);
  for (std::uint64_t i = 0; i < k; ++i) num.push_back(double(a - i));
  for (std::uint64_t i = 0; i < k; ++i) num.push_back(double(b - i));
  for (std::uint64_t i = 0; i < b - k; ++i) num.push_back(double(s - a - i));
  for (std::uint64_t i = 0; i < b; ++i) den.push_back(double(s - i));
  for (std::uint64_t i = 0; i < k; ++i) den.push_back(double(k - i));
  return detail::ratio_product(num, den);
}

/// p_w: probability a fresh uniform user set can write one of w given
/// unfilled slots, 1 - falling(s-u,w)/falling(s,w).
inline double fill_probability(std::uint64_t s, std::uint64_t u, std::uint64_t w) {
  if (w > s) throw ParameterError("fill_probability: w > s");
  if (u > s) throw ParameterError("fill_probability: u > s");
  double ratio = 1.0;
  for (std::uint64_t i = 0; i < w; ++i) {
    if (s - u < i + 1) return 1.0;  // falling factorial hits zero
    ratio *= double(s - u - i) / double(s - i);
  }
  return 1.0 - ratio;
}

/// All of p_0..p_vmax in O(vmax) via incremental ratio updates.
inline std::vector<double> fill_probability_vector(std::uint64_t s, std::uint64_t u,
                                                   std::uint64_t v_max) {
  if (u > s || v_max > s) throw ParameterError("fill_probability_vector: need u, v <= s");
  std::vector<double> p(v_max + 1, 0.0);
  double ratio = 1.0;
  for (std::uint64_t w = 1; w <= v_max; ++w) {
    if (s - u < w)
      ratio = 0.0;
    else
      ratio *= double(s - u - (w - 1)) / double(s - (w - 1));
    p[w] = 1.0 - ratio;
  }
  return p;
}

/// q_w: probability exactly w of an item's v slots are unfilled after m
/// background increments, i.e. Pr(|size-m n size-v| = v-w). Computed by the
/// O(1) adjacent-k recurrence seeded at the hypergeometric mode (the direct
/// per-w product is the cross-check in tests; seeding at the mode avoids
/// starting the recurrence from an underflowed tail value).
inline std::vector<double> background_unfilled_distribution(std::uint64_t s, std::uint64_t m,
                                                            std::uint64_t v) {
  if (v > s || m > s) throw ParameterError("background_unfilled_distribution: need m, v <= s");
  std::vector<double> q(v + 1, 0.0);
  const std::uint64_t k_lo = (m + v > s) ? m + v - s : 0;  // min intersection
  const std::uint64_t k_hi = std::min(m, v);
  if (k_hi < k_lo) return q;  // impossible configuration, all mass zero

  // direct product for the seed value at the mode
  auto q_at = [&](std::uint64_t k) {
    const std::uint64_t w = v - k;
    std::vector<double> num, den;
    num.reserve(v + k);
    den.reserve(v + k);
    for (std::uint64_t i = 0; i < k; ++i) num.push_back(double(m - i));
    for (std::uint64_t i = 0; i < k; ++i) num.push_back(double(v - i));
    for (std::uint64_t i = 0; i < w; ++i) num.push_back(double(s - m - i));
    for (std::uint64_t i = 0; i < v; ++i) den.push_back(double(s - i));
    for (std::uint64_t i = 0; i < k; ++i) den.push_back(double(k - i));
    return detail::ratio_product(num, den);
  };

  std::uint64_t k_star = std::uint64_t((double(m) + 1.0) * (double(v) + 1.0) / (double(s) + 2.0));
  k_star = std::min(std::max(k_star, k_lo), k_hi);
  const double q_star = q_at(k_star);
  q[v - k_star] = q_star;

  double val = q_star;
  for (std::uint64_t k = k_star; k < k_hi; ++k) {  // upward in k
    val *= double(m - k) * double(v - k) / (double(s - m - v + k + 1) * double(k + 1));
    q[v - (k + 1)] = val;
  }
  val = q_star;
  for (std::uint64_t k = k_star; k > k_lo; --k) {  // downward in k
    val *= double(s - m - v + k) * double(k) / (double(m - k + 1) * double(v - k + 1));
    q[v - (k - 1)] = val;
  }
  return q;
}

/// R_{w,t} for all 0 <= w <= v: expected unfilled item slots after t
/// increments on the item starting from w unfilled. DP over
/// R_{w,k} = p_w R_{w-1,k-1} + (1-p_w) R_{w,k-1}, R_{0,k}=0, R_{w,0}=w.
/// O(t v) time, O(v) space (descending w updates in place).
inline std::vector<double> r_table(std::uint64_t s, std::uint64_t u, std::uint64_t v,
                                   std::uint64_t t) {
  const std::vector<double> p = fill_probability_vector(s, u, v);
  std::vector<double> r(v + 1);
  for (std::uint64_t w = 0; w <= v; ++w) r[w] = double(w);
  for (std::uint64_t k = 0; k < t; ++k)
    for (std::uint64_t w = v; w >= 1; --w) r[w] = p[w] * r[w - 1] + (1.0 - p[w]) * r[w];
  return r;
}

/// Precomputed tipping tables for one (s, u, v, m, t) context.
struct TippingTables {
  std::uint64_t s = 0, m = 0;
  std::uint64_t u = 0, v = 0, t = 0;
  std::vector<double> p;      // p_w, 0 <= w <= v
  std::vector<double> q;      // q_w, 0 <= w <= v
  std::vector<double> r_row;  // R_{w,t}, 0 <= w <= v

  double tau_exact() const {
    double acc = 0.0;
    for (std::uint64_t w = 0; w <= v; ++w) acc += q[w] * r_row[w];
    return double(v) - acc;
  }
};

inline TippingTables build_tipping_tables(std::uint64_t s, std::uint64_t u, std::uint64_t v,
                                          std::uint64_t m, std::uint64_t t) {
  if (m > s) throw ParameterError("build_tipping_tables: m > s");
  TippingTables tb;
  tb.s = s;
  tb.m = m;
  tb.u = u;
  tb.v = v;
  tb.t = t;
  tb.p = fill_probability_vector(s, u, v);
  tb.q = background_unfilled_distribution(s, m, v);
  tb.r_row = r_table(s, u, v, t);
  return tb;
}

/// The tipping point: round(v - sum_w q_w R_{w,t}), half away from zero.
/// O(t v) time, O(v) space.
inline std::int64_t tipping_point(std::uint64_t s, std::uint64_t u, std::uint64_t v,
                                  std::uint64_t m, std::uint64_t t) {
  return std::llround(build_tipping_tables(s, u, v, m, t).tau_exact());
}

/// Fixed (s, u, v, t) with tau queried per table fill m: the R row costs
/// O(t v) once, each tau(m) is then O(v). Audit clients and the experiment
/// harness query tau for many m values of the same epoch.
class TippingCurve {
 public:
  TippingCurve(std::uint64_t s, std::uint64_t u, std::uint64_t v, std::uint64_t t)
      : s_(s), v_(v), t_(t), r_row_(r_table(s, u, v, t)) {}

  double tau_exact(std::uint64_t m) const {
    const std::vector<double> q = background_unfilled_distribution(s_, m, v_);
    double acc = 0.0;
    for (std::uint64_t w = 0; w <= v_; ++w) acc += q[w] * r_row_[w];
    return double(v_) - acc;
  }

  std::int64_t tau(std::uint64_t m) const { return std::llround(tau_exact(m)); }

  const std::vector<double>& r_row() const { return r_row_; }

 private:
  std::uint64_t s_, v_, t_;
  std::vector<double> r_row_;
};

// ---- parameter recipe and tail thresholds ----

/// Checks that a parameter tuple lies in the regime where the tail-bound
/// accuracy guarantees hold. The stated constants are four-to-five
/// significant digit roundings, and the recipe s=96n, v=7.409t, u=47.31n/t
/// sits exactly on the boundary they round to, so each inequality carries
/// 0.5% relative slack. Returns human-readable violations (empty when all
/// hold).
inline std::vector<std::string> accuracy_precondition_violations(const CcbfParams& p) {
  std::vector<std::string> bad;
  const double s = double(p.s), u = double(p.u), v = double(p.v), t = double(p.t);
  const double slack = 0.005;
  const double tau_ub = 1.0520553 * t;  // worst-case tipping point
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  check(v >= 7.042652 * tau_ub * (1.0 - slack), "v >= 7.042652*tau for tau up to 1.0520553t");
  check(u >= 0.5184846 * s / tau_ub * (1.0 - slack), "u >= 0.5184846*s/tau for tau up to 1.0520553t");
  check(v >= 371.0 * (1.0 - slack), "v >= 371");
  check(v <= 0.00386 * s * (1.0 + slack), "v <= 0.00386s");
  check(u <= 3.65151 * s / v * (1.0 + slack), "u <= 3.65151*s/v");
  check(v <= 8.0 * t, "v <= 8t");
  check(v <= 7.409 * t * (1.0 + slack), "v <= 7.409t");
  check(s >= 96.0 * double(p.n), "s >= 96n (covers s >= 96m for all m <= n)");
  return bad;
}

/// The parameter recipe: s = 96n, v = round(7.409 t), u = round(47.31 n/t),
/// valid for 50 <= t <= n/20. Fails loudly if the derived tuple misses any
/// accuracy precondition.
inline CcbfParams choose_params(std::uint64_t n, std::uint32_t t, std::uint32_t lambda_stat = 40) {
  if (t < 50) throw ParameterError("choose_params: t below 50 (recipe lower bound)");
  if (std::uint64_t(t) * 20 > n)
    throw ParameterError("choose_params: t above n/20 (recipe upper bound)");
  CcbfParams p;
  p.n = n;
  p.t = t;
  p.lambda_stat = lambda_stat;
  p.s = 96 * n;
  p.v = static_cast<std::uint32_t>(std::llround(7.409 * double(t)));
  p.u = static_cast<std::uint32_t>(std::llround(47.31 * double(n) / double(t)));
  p.validate();
  const std::vector<std::string> bad = accuracy_precondition_violations(p);
  if (!bad.empty()) {
    std::string msg = "choose_params: accuracy precondition violated:";
    for (const std::string& b : bad) msg += " [" + b + "]";
    throw ParameterError(msg);
  }
  return p;
}

/// Tail-bound counts for threshold t at statistical parameter lambda:
/// below fp_safe_count a TestCount true is 2^-lambda-rare; above
/// fn_safe_count a TestCount false is 2^-lambda-rare.
struct TailThresholds {
  double fp_safe_count = 0;  // t - 2.1 sqrt(lambda t)
  double fn_safe_count = 0;  // 1.1t + 0.4 lambda + 0.7 sqrt(lambda t)
  double tau_upper = 0;      // 1.0520553 t

  /// False if t is too small for this lambda to leave any safe-count room.
  bool fp_meaningful() const { return fp_safe_count > 0; }
};

inline TailThresholds tail_thresholds(std::uint32_t t, std::uint32_t lambda_stat) {
  if (t < 1 || lambda_stat < 1) throw ParameterError("tail_thresholds: need t, lambda >= 1");
  const double td = t, ld = lambda_stat;
  TailThresholds th;
  th.fp_safe_count = td - 2.1 * std::sqrt(ld * td);
  th.fn_safe_count = 1.1 * td + 0.4 * ld + 0.7 * std::sqrt(ld * td);
  th.tau_upper = 1.0520553 * td;
  return th;
}

}  // namespace facts

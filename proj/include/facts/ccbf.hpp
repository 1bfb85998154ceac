#pragma once

#include <optional>

#include "facts/bit_table.hpp"
#include "facts/index_set.hpp"

namespace facts {

struct IncrementOutcome {
  std::optional<std::uint64_t> written_index;  // nullopt: abort, table unchanged
  bool hit_item = false;                       // written index was in the item set

  bool aborted() const { return !written_index.has_value(); }
};

namespace detail {

template <class URBG>
std::uint64_t pick_uniform(const std::vector<std::uint64_t>& candidates, URBG& rng) {
  return candidates[uniform_below(rng, candidates.size())];
}

}  // namespace detail

/// Client half of Increment against a snapshot of the user's bit values.
/// `snapshot` packs the bits of user_set.indices[j] at bit j (LSB-first).
/// Returns the index to send, or nullopt for abort (no settable location).
template <class URBG>
std::optional<std::pair<std::uint64_t, bool>> choose_complaint_index(
    ByteView snapshot, const IndexSet& user_set, const IndexSet& item_set, URBG& rng) {
  const std::size_t u = user_set.size();
  if (snapshot.size() != (u + 7) / 8)
    throw ParameterError("choose_complaint_index: snapshot size mismatch");
  std::vector<std::uint64_t> settable;  // S_C = {i in U_C | T[i] = 0}
  settable.reserve(u);
  for (std::size_t j = 0; j < u; ++j)
    if (((snapshot[j >> 3] >> (j & 7)) & 1) == 0) settable.push_back(user_set.indices[j]);
  if (settable.empty()) return std::nullopt;

  std::vector<std::uint64_t> preferred;  // S_C n V_x
  std::set_intersection(settable.begin(), settable.end(), item_set.indices.begin(),
                        item_set.indices.end(), std::back_inserter(preferred));
  if (!preferred.empty()) return std::make_pair(detail::pick_uniform(preferred, rng), true);
  return std::make_pair(detail::pick_uniform(settable, rng), false);
}

/// Whole-increment convenience for in-process use (simulations, tests):
/// both protocol halves against the live table. Caller must hold the
/// table's write lock; see BitTable::WriteGuard.
template <class URBG>
IncrementOutcome increment(BitTable& table, const IndexSet& user_set,
                           const IndexSet& item_set, URBG& rng) {
  if (!table.write_locked())
    throw ContractError("increment: table write lock not held");
  Bytes snapshot((user_set.size() + 7) / 8, 0);
  for (std::size_t j = 0; j < user_set.size(); ++j)
    if (table.test(user_set.indices[j])) snapshot[j >> 3] |= std::uint8_t(1) << (j & 7);
  auto choice = choose_complaint_index(ByteView{snapshot}, user_set, item_set, rng);
  if (!choice) return {};
  table.set(choice->first);
  return {choice->first, choice->second};
}

/// Server half of Increment: accept iff i is in the user set and T[i] = 0;
/// on accept the bit is set. Table unchanged on reject.
inline bool server_validate_index(BitTable& table, const IndexSet& user_set, std::uint64_t i) {
  if (!table.write_locked())
    throw ContractError("server_validate_index: table write lock not held");
  if (i >= table.size() || !user_set.contains(i) || table.test(i)) return false;
  table.set(i);
  return true;
}

/// TestCount comparison: number of set bits within the item set >= tau.
/// Read-only; takes no lock (a concurrent increment can skew the count by
/// at most the one bit in flight, which the audit flow tolerates).
inline bool test_count(const BitTable& table, const IndexSet& item_set, std::int64_t tau) {
  if (tau < 0) throw ParameterError("test_count: tau must be >= 0");
  std::int64_t count = 0;
  for (std::uint64_t i : item_set.indices) count += table.test(i) ? 1 : 0;
  return count >= tau;
}

/// Set-bit count within an item set (the raw value TestCount thresholds).
inline std::int64_t item_fill_count(const BitTable& table, const IndexSet& item_set) {
  std::int64_t count = 0;
  for (std::uint64_t i : item_set.indices) count += table.test(i) ? 1 : 0;
  return count;
}

}  // namespace facts

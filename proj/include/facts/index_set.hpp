#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_set>

#include "facts/params.hpp"
#include "facts/sha3.hpp"

namespace facts {

enum class SetKind : std::uint8_t { User = 0x01, Item = 0x02 };

/// A derived set of distinct table indices: the u writable locations of a
/// user, or the v locations of an item. Derivation is a pure function of
/// (owner_key, params) so user and server always agree.
struct IndexSet {
  SetKind kind = SetKind::User;
  Bytes owner_key;
  std::vector<std::uint64_t> indices;  // sorted, distinct, < s

  std::size_t size() const { return indices.size(); }

  bool contains(std::uint64_t i) const {
    return std::binary_search(indices.begin(), indices.end(), i);
  }
};

namespace detail {

/// Floyd's sampling: exactly `count` distinct values in [0, s), uniform over
/// all size-count subsets given a uniform draw stream.
inline std::vector<std::uint64_t> sample_distinct(HashCounterStream& stream,
                                                  std::uint64_t s, std::uint64_t count) {
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(count * 2);
  for (std::uint64_t j = s - count; j < s; ++j) {
    std::uint64_t r = stream.uniform_below(j + 1);
    if (!chosen.insert(r).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// The u table locations user `user_id` may write. Keyed by the server-held
/// derivation secret (shared with the user), rotated at each epoch.
inline IndexSet derive_user_set(std::string_view user_id,
                                std::span<const std::uint8_t, 32> derive_key,
                                const CcbfParams& params) {
  params.validate();
  if (user_id.empty()) throw ParameterError("derive_user_set: empty user id");
  Bytes prefix(derive_key.begin(), derive_key.end());
  prefix.push_back(static_cast<std::uint8_t>(SetKind::User));
  prefix.insert(prefix.end(), user_id.begin(), user_id.end());
  HashCounterStream stream(std::move(prefix));
  IndexSet set;
  set.kind = SetKind::User;
  set.owner_key.assign(user_id.begin(), user_id.end());
  set.indices = detail::sample_distinct(stream, params.s, params.u);
  return set;
}

/// The v table locations of an item. Publicly computable from the item key
/// alone (the item key is the serialized tag), no secret input.
inline IndexSet derive_item_set(ByteView item_key, const CcbfParams& params) {
  params.validate();
  if (item_key.empty()) throw ParameterError("derive_item_set: empty item key");
  Bytes prefix;
  prefix.reserve(1 + item_key.size());
  prefix.push_back(static_cast<std::uint8_t>(SetKind::Item));
  prefix.insert(prefix.end(), item_key.begin(), item_key.end());
  HashCounterStream stream(std::move(prefix));
  IndexSet set;
  set.kind = SetKind::Item;
  set.owner_key.assign(item_key.begin(), item_key.end());
  set.indices = detail::sample_distinct(stream, params.s, params.v);
  return set;
}

}  // namespace facts

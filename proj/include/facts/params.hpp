#pragma once

#include <cstdint>
#include <string>

#include "facts/common.hpp"

namespace facts {

/// CCBF sizing: table of s bits, user sets of u indices, item sets of v
/// indices, plus the planning inputs they were chosen for (per-epoch
/// complaint cap n, audit threshold t, statistical parameter lambda).
struct CcbfParams {
  std::uint64_t s = 0;
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  std::uint64_t n = 0;
  std::uint32_t t = 0;
  std::uint32_t lambda_stat = 0;

  void validate() const {
    if (u == 0 || u > s) throw ParameterError("CcbfParams: need 0 < u <= s");
    if (v == 0 || v > s) throw ParameterError("CcbfParams: need 0 < v <= s");
    if (t < 1) throw ParameterError("CcbfParams: need t >= 1");
    if (n < t) throw ParameterError("CcbfParams: need n >= t");
  }

  friend bool operator==(const CcbfParams&, const CcbfParams&) = default;
};

}  // namespace facts

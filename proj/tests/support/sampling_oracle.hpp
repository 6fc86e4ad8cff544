#pragma once

// Brute-force reference for dilated sampling: enumerates raw indices directly.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "prp/video.hpp"

namespace prp::test {

inline std::vector<float> frame_copy(const video::FrameSeq& f, int64_t t) {
  auto span = f.frame(t);
  return {span.begin(), span.end()};
}

/// V(s) by enumeration: keep raw frame i whenever i is a multiple of s and a whole group of s fits.
inline std::vector<std::vector<float>> oracle_dilated(const video::FrameSeq& raw, int s) {
  std::vector<std::vector<float>> out;
  for (int64_t i = 0; i + s <= raw.count(); ++i) {
    if (i % s == 0) out.push_back(frame_copy(raw, i));
  }
  return out;
}

struct OracleSample {
  std::vector<std::vector<float>> input;
  std::vector<std::vector<float>> ground_truth;
};

/// Enumerates the ground-truth raw positions start + u*s/r with exact rational arithmetic.
/// Returns nullopt when any position (or its lower bracket) falls outside the video.
inline std::optional<OracleSample> oracle_sample(const video::FrameSeq& raw, int s, int r, int l, int64_t start) {
  const int64_t n = raw.count();
  OracleSample out;
  for (int t = 0; t < l; ++t) {
    const int64_t idx = start + int64_t{s} * t;
    if (idx >= n) return std::nullopt;
    out.input.push_back(frame_copy(raw, idx));
  }
  for (int64_t u = 0; u < int64_t{r} * l; ++u) {
    // position = start + (u*s)/r, split into whole and fractional part by enumeration
    int64_t whole = start;
    int64_t acc = u * s;
    while (acc >= r) {
      acc -= r;
      ++whole;
    }
    if (whole >= n) return std::nullopt;
    const auto lo = frame_copy(raw, whole);
    if (acc == 0) {
      out.ground_truth.push_back(lo);
      continue;
    }
    const auto hi = frame_copy(raw, std::min(whole + 1, n - 1));
    const double w = static_cast<double>(acc) / static_cast<double>(r);
    std::vector<float> mix(lo.size());
    for (size_t i = 0; i < lo.size(); ++i) mix[i] = static_cast<float>((1.0 - w) * lo[i] + w * hi[i]);
    out.ground_truth.push_back(mix);
  }
  return out;
}

inline bool frames_equal(const video::FrameSeq& got, const std::vector<std::vector<float>>& want) {
  if (got.count() != static_cast<int64_t>(want.size())) return false;
  for (int64_t t = 0; t < got.count(); ++t) {
    auto f = got.frame(t);
    if (!std::equal(f.begin(), f.end(), want[static_cast<size_t>(t)].begin(), want[static_cast<size_t>(t)].end())) {
      return false;
    }
  }
  return true;
}

}  // namespace prp::test

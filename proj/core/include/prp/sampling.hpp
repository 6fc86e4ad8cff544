#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prp/video.hpp"

namespace prp::sampling {

/// Which raw frames feed the motion-attention computation.
enum class AttentionSource {
  kGroundTruthAligned,  ///< frames at the ground-truth positions (same length as G)
  kRawWindow,           ///< every raw frame spanned by the input clip (s * l frames)
};

struct SamplingSpec {
  std::vector<int> intervals{1, 2, 4, 8};
  int clip_len = 16;
  int recon_rate = 2;
  AttentionSource attention_source = AttentionSource::kGroundTruthAligned;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int num_classes() const { return static_cast<int>(intervals.size()); }
  /// Position of `interval` in `intervals`, if present.
  std::optional<int> rate_class(int interval) const;
};

struct TrainingSample {
  video::FrameSeq input_clip;        // X(s): clip_len frames
  video::FrameSeq ground_truth;      // G: recon_rate * clip_len frames
  video::FrameSeq attention_source;  // R
  int rate_class = 0;
  int64_t start_index = 0;
  int interval = 1;
  std::string source_id;
  std::optional<int> video_label;
};

/// V(s): raw frame u*s for u in [0, floor(count / s)).
video::RawVideo dilated_sample(const video::RawVideo& video, int s);

/// Frames [start, start + length) of an already dilated video.
video::FrameSeq extract_clip(const video::RawVideo& video_s, int64_t start, int64_t length);

/// Last raw frame index that must exist for a sample at (s, start).
int64_t last_required_index(const SamplingSpec& spec, int s, int64_t start);

/// Largest valid start for interval `s`, or nullopt when the video is too short.
std::optional<int64_t> max_start(int64_t frame_count, const SamplingSpec& spec, int s);

/// Builds X(s), the r-times slow-down target G and the attention frames R.
/// When `augment` is set, one crop/flip drawn from `rng_seed` is applied to all three clips.
TrainingSample make_training_sample(const video::RawVideo& video, const SamplingSpec& spec, int s, int64_t start,
                                    uint64_t rng_seed, const std::optional<video::AugmentSpec>& augment = std::nullopt);

/// Uniform over (video, supported interval, valid start); deterministic in `rng_seed`.
std::vector<TrainingSample> sample_batch(std::span<const video::RawVideo> videos, const SamplingSpec& spec,
                                         int batch_size, uint64_t rng_seed,
                                         const std::optional<video::AugmentSpec>& augment = std::nullopt);

}  // namespace prp::sampling

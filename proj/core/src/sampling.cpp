#include "prp/sampling.hpp"

#include <algorithm>
#include <random>

#include "prp/errors.hpp"

namespace prp::sampling {

using video::FrameSeq;
using video::RawVideo;

namespace {

bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

void SamplingSpec::validate() const {
  if (intervals.empty()) throw ConfigError("sampling.intervals must not be empty");
  for (size_t i = 0; i < intervals.size(); ++i) {
    if (!is_power_of_two(intervals[i])) {
      throw ConfigError("sampling.intervals: " + std::to_string(intervals[i]) + " is not a power of two");
    }
    if (i > 0 && intervals[i] <= intervals[i - 1]) {
      throw ConfigError("sampling.intervals must be sorted ascending without duplicates");
    }
  }
  if (clip_len < 2) throw ConfigError("sampling.clip_len must be >= 2");
  if (recon_rate != 1 && recon_rate != 2 && recon_rate != 4) {
    throw ConfigError("sampling.recon_rate must be one of 1, 2, 4 (got " + std::to_string(recon_rate) + ")");
  }
}

std::optional<int> SamplingSpec::rate_class(int interval) const {
  auto it = std::find(intervals.begin(), intervals.end(), interval);
  if (it == intervals.end()) return std::nullopt;
  return static_cast<int>(it - intervals.begin());
}

RawVideo dilated_sample(const RawVideo& video, int s) {
  if (s < 1) throw InputError("sampling interval must be >= 1 (got " + std::to_string(s) + ")");
  const int64_t count = video.frame_count() / s;
  std::vector<int64_t> indices(static_cast<size_t>(count));
  for (int64_t u = 0; u < count; ++u) indices[static_cast<size_t>(u)] = u * s;
  RawVideo out;
  out.frames = video.frames.gather(indices);
  out.source_id = video.source_id;
  out.label = video.label;
  return out;
}

FrameSeq extract_clip(const RawVideo& video_s, int64_t start, int64_t length) {
  if (length < 1 || start < 0 || start + length > video_s.frame_count()) {
    throw InputError("clip window [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside video of " + std::to_string(video_s.frame_count()) + " frames");
  }
  std::vector<int64_t> indices(static_cast<size_t>(length));
  for (int64_t i = 0; i < length; ++i) indices[static_cast<size_t>(i)] = start + i;
  return video_s.frames.gather(indices);
}

int64_t last_required_index(const SamplingSpec& spec, int s, int64_t start) {
  // Ground-truth positions are start + u*s/r for u < r*l; the furthest one that must be read
  // exactly is floor(start + s*l - s/r).
  return start + int64_t{s} * spec.clip_len - ceil_div(s, spec.recon_rate);
}

std::optional<int64_t> max_start(int64_t frame_count, const SamplingSpec& spec, int s) {
  const int64_t last = last_required_index(spec, s, 0);
  if (last >= frame_count) return std::nullopt;
  return frame_count - 1 - last;
}

namespace {

// Frame at the rational raw position start + num/den, linearly interpolated; the upper
// neighbour is clamped to the final raw frame.
void interpolated_frame(const FrameSeq& raw, int64_t start, int64_t num, int64_t den, std::span<float> dst) {
  const int64_t base = start + num / den;
  const int64_t rem = num % den;
  auto lo = raw.frame(base);
  if (rem == 0) {
    std::copy(lo.begin(), lo.end(), dst.begin());
    return;
  }
  auto hi = raw.frame(std::min(base + 1, raw.count() - 1));
  const double frac = static_cast<double>(rem) / static_cast<double>(den);
  for (size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<float>((1.0 - frac) * lo[i] + frac * hi[i]);
  }
}

}  // namespace

TrainingSample make_training_sample(const RawVideo& video, const SamplingSpec& spec, int s, int64_t start,
                                    uint64_t rng_seed, const std::optional<video::AugmentSpec>& augment) {
  spec.validate();
  const auto rate_class = spec.rate_class(s);
  if (!rate_class) throw InputError("interval " + std::to_string(s) + " is not in the sampling set");
  if (start < 0 || last_required_index(spec, s, start) >= video.frame_count()) {
    throw InputError("sample window at start " + std::to_string(start) + " with interval " + std::to_string(s) +
                     " overflows video of " + std::to_string(video.frame_count()) + " frames");
  }
  const FrameSeq& raw = video.frames;
  const int l = spec.clip_len;
  const int r = spec.recon_rate;

  TrainingSample sample;
  sample.rate_class = *rate_class;
  sample.start_index = start;
  sample.interval = s;
  sample.source_id = video.source_id;
  sample.video_label = video.label;

  std::vector<int64_t> input_idx(static_cast<size_t>(l));
  for (int t = 0; t < l; ++t) input_idx[static_cast<size_t>(t)] = start + int64_t{s} * t;
  sample.input_clip = raw.gather(input_idx);

  const int64_t gt_len = int64_t{r} * l;
  sample.ground_truth = FrameSeq(gt_len, raw.height(), raw.width(), raw.channels());
  for (int64_t u = 0; u < gt_len; ++u) {
    interpolated_frame(raw, start, u * s, r, sample.ground_truth.frame(u));
  }

  if (spec.attention_source == AttentionSource::kGroundTruthAligned) {
    sample.attention_source = sample.ground_truth;
  } else {
    std::vector<int64_t> window(static_cast<size_t>(int64_t{s} * l));
    for (size_t i = 0; i < window.size(); ++i) {
      window[i] = std::min(start + static_cast<int64_t>(i), raw.count() - 1);
    }
    sample.attention_source = raw.gather(window);
  }

  if (augment) {
    video::AugmentSpec aug = *augment;
    aug.seed = rng_seed;
    const auto crop = video::draw_crop_window(aug);
    sample.input_clip = video::apply_crop(sample.input_clip, aug, crop);
    sample.ground_truth = video::apply_crop(sample.ground_truth, aug, crop);
    sample.attention_source = video::apply_crop(sample.attention_source, aug, crop);
  }
  return sample;
}

std::vector<TrainingSample> sample_batch(std::span<const RawVideo> videos, const SamplingSpec& spec, int batch_size,
                                         uint64_t rng_seed, const std::optional<video::AugmentSpec>& augment) {
  spec.validate();
  if (videos.empty()) throw DatasetError("cannot sample from an empty dataset");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");

  std::vector<std::vector<int>> supported(videos.size());
  std::vector<size_t> usable;
  for (size_t v = 0; v < videos.size(); ++v) {
    for (int s : spec.intervals) {
      if (max_start(videos[v].frame_count(), spec, s)) supported[v].push_back(s);
    }
    if (!supported[v].empty()) usable.push_back(v);
  }
  if (usable.empty()) throw DatasetError("no video is long enough for any sampling interval");

  std::mt19937_64 rng(rng_seed);
  std::vector<TrainingSample> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const size_t v = usable[std::uniform_int_distribution<size_t>(0, usable.size() - 1)(rng)];
    const auto& options = supported[v];
    const int s = options[std::uniform_int_distribution<size_t>(0, options.size() - 1)(rng)];
    const int64_t hi = *max_start(videos[v].frame_count(), spec, s);
    const int64_t start = std::uniform_int_distribution<int64_t>(0, hi)(rng);
    const uint64_t crop_seed = rng();
    batch.push_back(make_training_sample(videos[v], spec, s, start, crop_seed, augment));
  }
  return batch;
}

}  // namespace prp::sampling

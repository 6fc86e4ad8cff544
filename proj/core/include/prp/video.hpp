#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace prp::video {

/// Ordered frames sharing one H x W x C layout; pixel values are floats in [0, 1].
/// Storage is frame-major, then row, column, channel.
class FrameSeq {
 public:
  FrameSeq() = default;
  FrameSeq(int64_t count, int64_t height, int64_t width, int64_t channels, float fill = 0.0f);

  int64_t count() const { return count_; }
  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t channels() const { return channels_; }
  int64_t frame_size() const { return height_ * width_ * channels_; }
  bool same_layout(const FrameSeq& other) const;

  std::span<float> frame(int64_t t);
  std::span<const float> frame(int64_t t) const;
  float& at(int64_t t, int64_t y, int64_t x, int64_t c) {
    return pixels_[static_cast<size_t>(((t * height_ + y) * width_ + x) * channels_ + c)];
  }
  float at(int64_t t, int64_t y, int64_t x, int64_t c) const {
    return pixels_[static_cast<size_t>(((t * height_ + y) * width_ + x) * channels_ + c)];
  }

  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }

  /// Appends a frame; the first frame fixes the layout.
  void push_frame(std::span<const float> frame, int64_t height, int64_t width, int64_t channels);

  /// Frames at the given indices, in order.
  FrameSeq gather(std::span<const int64_t> indices) const;

  bool operator==(const FrameSeq& other) const = default;

 private:
  int64_t count_ = 0;
  int64_t height_ = 0;
  int64_t width_ = 0;
  int64_t channels_ = 0;
  std::vector<float> pixels_;
};

struct RawVideo {
  FrameSeq frames;
  std::string source_id;
  std::optional<int> label;

  int64_t frame_count() const { return frames.count(); }
};

/// Integer per-frame displacement of the synthetic pattern, in pixels.
struct MotionClass {
  std::string name;
  int dx = 0;
  int dy = 0;

  static MotionClass stationary() { return {"stationary", 0, 0}; }
};

/// Four directions (right, down, left, up) crossed with each speed.
std::vector<MotionClass> default_motion_classes(std::span<const int> speeds = std::vector<int>{1, 3});

struct SyntheticSpec {
  int num_videos = 64;
  int frame_count = 40;
  int height = 32;
  int width = 32;
  std::vector<MotionClass> motion_classes = default_motion_classes();
  double noise_std = 0.02;
  uint64_t seed = 0;
};

/// Video `index` of the deterministic synthetic corpus described by `spec`.
/// Label is `index % motion_classes.size()`, so labels are balanced.
RawVideo generate_synthetic_video(const SyntheticSpec& spec, int index);

/// All spec.num_videos videos, in index order.
std::vector<RawVideo> generate_synthetic_corpus(const SyntheticSpec& spec);

/// Motion class names, in label order.
std::vector<std::string> class_names(const SyntheticSpec& spec);

/// Per-pixel coverage of the synthetic pattern in frame `t` (H*W, row-major).
std::vector<bool> synthetic_pattern_mask(const SyntheticSpec& spec, int index, int64_t t);

struct AugmentSpec {
  std::pair<int, int> resize_hw{128, 171};
  std::pair<int, int> crop_hw{112, 112};
  bool flip = true;
  uint64_t seed = 0;
};

/// One crop/flip decision shared by every frame of a clip.
struct CropWindow {
  int top = 0;
  int left = 0;
  bool flip = false;
};

CropWindow draw_crop_window(const AugmentSpec& aug);
CropWindow center_crop_window(const AugmentSpec& aug);

/// Resizes every frame to aug.resize_hw, then cuts the window and optionally mirrors horizontally.
FrameSeq apply_crop(const FrameSeq& clip, const AugmentSpec& aug, const CropWindow& window);

/// Random crop + flip with one decision for the whole clip.
FrameSeq augment_clip(const FrameSeq& clip, const AugmentSpec& aug);

/// Bilinear spatial resize of every frame.
FrameSeq resize_frames(const FrameSeq& clip, int height, int width);

/// Loads a directory of lexically ordered images, or a video container when a decoder exists.
RawVideo load_frame_sequence(const std::filesystem::path& path, std::pair<int, int> resize_hw);

/// Writes frames as 8-bit PNGs named %06d.png under `dir`.
void write_frame_sequence(const FrameSeq& frames, const std::filesystem::path& dir);

/// Writes an 8-bit single-channel PNG from `values` (H*W, already in [0,255]).
void write_gray_png(const std::filesystem::path& file, std::span<const double> values, int height, int width);

/// Entry of a frame-directory dataset: <root>/<class_name>/<video_id>/.
struct VideoRef {
  std::filesystem::path path;
  std::string video_id;
  int label = 0;
};

struct DatasetListing {
  std::vector<std::string> class_names;
  std::vector<VideoRef> videos;
};

/// Reads classes.txt (falls back to sorted class subdirectories) and enumerates videos.
DatasetListing list_dataset(const std::filesystem::path& root);

/// Lists and loads every video of a frame-directory dataset.
std::vector<RawVideo> load_dataset(const std::filesystem::path& root, std::pair<int, int> resize_hw);

/// Writes the canonical layout plus classes.txt.
void write_dataset(const std::filesystem::path& root, std::span<const RawVideo> videos,
                   std::span<const std::string> class_names);

}  // namespace prp::video

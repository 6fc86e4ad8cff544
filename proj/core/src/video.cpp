#include "prp/video.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "prp/errors.hpp"

namespace fs = std::filesystem;

namespace prp::video {

FrameSeq::FrameSeq(int64_t count, int64_t height, int64_t width, int64_t channels, float fill)
    : count_(count), height_(height), width_(width), channels_(channels),
      pixels_(static_cast<size_t>(count * height * width * channels), fill) {
  if (count < 0 || height < 1 || width < 1 || channels < 1) throw InputError("invalid frame sequence layout");
}

bool FrameSeq::same_layout(const FrameSeq& other) const {
  return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
}

std::span<float> FrameSeq::frame(int64_t t) {
  if (t < 0 || t >= count_) throw InputError("frame index " + std::to_string(t) + " out of range");
  return std::span<float>(pixels_).subspan(static_cast<size_t>(t * frame_size()), static_cast<size_t>(frame_size()));
}

std::span<const float> FrameSeq::frame(int64_t t) const {
  if (t < 0 || t >= count_) throw InputError("frame index " + std::to_string(t) + " out of range");
  return std::span<const float>(pixels_).subspan(static_cast<size_t>(t * frame_size()),
                                                 static_cast<size_t>(frame_size()));
}

void FrameSeq::push_frame(std::span<const float> frame, int64_t height, int64_t width, int64_t channels) {
  if (count_ == 0 && pixels_.empty()) {
    height_ = height;
    width_ = width;
    channels_ = channels;
  } else if (height != height_ || width != width_ || channels != channels_) {
    throw InputError("frame layout differs from the sequence layout");
  }
  if (static_cast<int64_t>(frame.size()) != frame_size()) throw InputError("frame size mismatch");
  pixels_.insert(pixels_.end(), frame.begin(), frame.end());
  ++count_;
}

FrameSeq FrameSeq::gather(std::span<const int64_t> indices) const {
  FrameSeq out(static_cast<int64_t>(indices.size()), height_, width_, channels_);
  for (size_t i = 0; i < indices.size(); ++i) {
    auto src = frame(indices[i]);
    std::copy(src.begin(), src.end(), out.frame(static_cast<int64_t>(i)).begin());
  }
  return out;
}

std::vector<MotionClass> default_motion_classes(std::span<const int> speeds) {
  static constexpr struct {
    const char* name;
    int dx;
    int dy;
  } kDirections[] = {{"right", 1, 0}, {"down", 0, 1}, {"left", -1, 0}, {"up", 0, -1}};
  std::vector<MotionClass> classes;
  for (int speed : speeds) {
    for (const auto& d : kDirections) {
      classes.push_back({std::string(d.name) + "_v" + std::to_string(speed), d.dx * speed, d.dy * speed});
    }
  }
  return classes;
}

namespace {

struct PatternParams {
  bool disc = false;
  int size = 0;
  int x0 = 0;
  int y0 = 0;
  std::vector<float> color;
  std::vector<float> background;
};

void check_spec(const SyntheticSpec& spec, int index) {
  if (spec.motion_classes.empty()) throw InputError("synthetic spec has no motion classes");
  if (spec.num_videos < 1 || spec.frame_count < 1 || spec.height < 4 || spec.width < 4) {
    throw InputError("synthetic spec dimensions must be positive (height/width >= 4)");
  }
  if (spec.noise_std < 0) throw InputError("noise_std must be >= 0");
  if (index < 0 || index >= spec.num_videos) {
    throw InputError("synthetic video index " + std::to_string(index) + " outside [0, " +
                     std::to_string(spec.num_videos) + ")");
  }
}

std::mt19937_64 video_rng(const SyntheticSpec& spec, int index) {
  std::seed_seq seq{static_cast<uint32_t>(spec.seed), static_cast<uint32_t>(spec.seed >> 32),
                    static_cast<uint32_t>(index), 0x5eedu};
  return std::mt19937_64(seq);
}

PatternParams draw_pattern(const SyntheticSpec& spec, int index, std::mt19937_64& rng) {
  constexpr int kChannels = 3;
  PatternParams p;
  const int classes = static_cast<int>(spec.motion_classes.size());
  p.disc = ((index / classes) % 2) == 1;
  const int short_side = std::min(spec.height, spec.width);
  const int lo = std::max(2, short_side / 5);
  const int hi = std::max(lo, short_side / 3);
  p.size = std::uniform_int_distribution<int>(lo, hi)(rng);
  p.x0 = std::uniform_int_distribution<int>(0, spec.width - 1)(rng);
  p.y0 = std::uniform_int_distribution<int>(0, spec.height - 1)(rng);
  std::uniform_real_distribution<float> bright(0.75f, 1.0f);
  std::uniform_real_distribution<float> dark(0.0f, 0.25f);
  for (int c = 0; c < kChannels; ++c) p.color.push_back(bright(rng));
  for (int c = 0; c < kChannels; ++c) p.background.push_back(dark(rng));
  return p;
}

int wrap(int v, int n) { return ((v % n) + n) % n; }

std::vector<bool> pattern_mask(const SyntheticSpec& spec, const PatternParams& p, const MotionClass& motion,
                               int64_t t) {
  const int cx = wrap(p.x0 + motion.dx * static_cast<int>(t), spec.width);
  const int cy = wrap(p.y0 + motion.dy * static_cast<int>(t), spec.height);
  const double half = p.size / 2.0;
  const double mid = (p.size - 1) / 2.0;
  std::vector<bool> mask(static_cast<size_t>(spec.height * spec.width), false);
  for (int y = 0; y < spec.height; ++y) {
    const int oy = wrap(y - cy, spec.height);
    for (int x = 0; x < spec.width; ++x) {
      const int ox = wrap(x - cx, spec.width);
      bool inside = false;
      if (ox < p.size && oy < p.size) {
        if (!p.disc) {
          inside = true;
        } else {
          const double ddx = ox - mid;
          const double ddy = oy - mid;
          inside = ddx * ddx + ddy * ddy <= half * half;
        }
      }
      mask[static_cast<size_t>(y * spec.width + x)] = inside;
    }
  }
  return mask;
}

}  // namespace

RawVideo generate_synthetic_video(const SyntheticSpec& spec, int index) {
  check_spec(spec, index);
  auto rng = video_rng(spec, index);
  const PatternParams pattern = draw_pattern(spec, index, rng);
  const int label = index % static_cast<int>(spec.motion_classes.size());
  const MotionClass& motion = spec.motion_classes[static_cast<size_t>(label)];
  constexpr int kChannels = 3;

  RawVideo video;
  video.source_id = "synthetic_" + std::to_string(index);
  video.label = label;
  video.frames = FrameSeq(spec.frame_count, spec.height, spec.width, kChannels);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_std));
  for (int64_t t = 0; t < spec.frame_count; ++t) {
    const auto mask = pattern_mask(spec, pattern, motion, t);
    auto frame = video.frames.frame(t);
    for (int64_t i = 0; i < spec.height * spec.width; ++i) {
      const auto& base = mask[static_cast<size_t>(i)] ? pattern.color : pattern.background;
      for (int c = 0; c < kChannels; ++c) {
        float v = base[static_cast<size_t>(c)];
        if (spec.noise_std > 0) v += noise(rng);
        frame[static_cast<size_t>(i * kChannels + c)] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return video;
}

std::vector<RawVideo> generate_synthetic_corpus(const SyntheticSpec& spec) {
  std::vector<RawVideo> videos;
  videos.reserve(static_cast<size_t>(std::max(0, spec.num_videos)));
  for (int i = 0; i < spec.num_videos; ++i) videos.push_back(generate_synthetic_video(spec, i));
  return videos;
}

std::vector<std::string> class_names(const SyntheticSpec& spec) {
  std::vector<std::string> names;
  for (const auto& m : spec.motion_classes) names.push_back(m.name);
  return names;
}

std::vector<bool> synthetic_pattern_mask(const SyntheticSpec& spec, int index, int64_t t) {
  check_spec(spec, index);
  auto rng = video_rng(spec, index);
  const PatternParams pattern = draw_pattern(spec, index, rng);
  const int label = index % static_cast<int>(spec.motion_classes.size());
  return pattern_mask(spec, pattern, spec.motion_classes[static_cast<size_t>(label)], t);
}

namespace {

void check_augment(const AugmentSpec& aug) {
  if (aug.resize_hw.first < 1 || aug.resize_hw.second < 1 || aug.crop_hw.first < 1 || aug.crop_hw.second < 1) {
    throw InputError("augment sizes must be positive");
  }
  if (aug.crop_hw.first > aug.resize_hw.first || aug.crop_hw.second > aug.resize_hw.second) {
    throw InputError("crop " + std::to_string(aug.crop_hw.first) + "x" + std::to_string(aug.crop_hw.second) +
                     " larger than resized frame " + std::to_string(aug.resize_hw.first) + "x" +
                     std::to_string(aug.resize_hw.second));
  }
}

}  // namespace

CropWindow draw_crop_window(const AugmentSpec& aug) {
  check_augment(aug);
  std::mt19937_64 rng(aug.seed);
  CropWindow w;
  w.top = std::uniform_int_distribution<int>(0, aug.resize_hw.first - aug.crop_hw.first)(rng);
  w.left = std::uniform_int_distribution<int>(0, aug.resize_hw.second - aug.crop_hw.second)(rng);
  w.flip = aug.flip && std::bernoulli_distribution(0.5)(rng);
  return w;
}

CropWindow center_crop_window(const AugmentSpec& aug) {
  check_augment(aug);
  return {(aug.resize_hw.first - aug.crop_hw.first) / 2, (aug.resize_hw.second - aug.crop_hw.second) / 2, false};
}

FrameSeq resize_frames(const FrameSeq& clip, int height, int width) {
  if (height < 1 || width < 1) throw InputError("resize target must be positive");
  if (clip.height() == height && clip.width() == width) return clip;
  const int channels = static_cast<int>(clip.channels());
  FrameSeq out(clip.count(), height, width, channels);
  for (int64_t t = 0; t < clip.count(); ++t) {
    auto src_span = clip.frame(t);
    cv::Mat src(static_cast<int>(clip.height()), static_cast<int>(clip.width()), CV_32FC(channels),
                const_cast<float*>(src_span.data()));
    cv::Mat dst(height, width, CV_32FC(channels), out.frame(t).data());
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  }
  for (float& v : out.pixels()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

FrameSeq apply_crop(const FrameSeq& clip, const AugmentSpec& aug, const CropWindow& window) {
  check_augment(aug);
  const FrameSeq resized = resize_frames(clip, aug.resize_hw.first, aug.resize_hw.second);
  const int ch = aug.crop_hw.first;
  const int cw = aug.crop_hw.second;
  if (window.top < 0 || window.left < 0 || window.top + ch > aug.resize_hw.first ||
      window.left + cw > aug.resize_hw.second) {
    throw InputError("crop window outside the resized frame");
  }
  FrameSeq out(clip.count(), ch, cw, clip.channels());
  for (int64_t t = 0; t < clip.count(); ++t) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        const int sx = window.flip ? window.left + cw - 1 - x : window.left + x;
        for (int64_t c = 0; c < clip.channels(); ++c) out.at(t, y, x, c) = resized.at(t, window.top + y, sx, c);
      }
    }
  }
  return out;
}

FrameSeq augment_clip(const FrameSeq& clip, const AugmentSpec& aug) {
  return apply_crop(clip, aug, draw_crop_window(aug));
}

namespace {

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> kExt{".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm", ".tif", ".tiff"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kExt.count(ext) > 0;
}

void append_mat(FrameSeq& seq, const cv::Mat& bgr, std::pair<int, int> resize_hw) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat resized;
  if (rgb.rows != resize_hw.first || rgb.cols != resize_hw.second) {
    cv::resize(rgb, resized, cv::Size(resize_hw.second, resize_hw.first), 0, 0, cv::INTER_LINEAR);
  } else {
    resized = rgb;
  }
  cv::Mat as_float;
  resized.convertTo(as_float, CV_32FC3, 1.0 / 255.0);
  if (!as_float.isContinuous()) as_float = as_float.clone();
  std::span<const float> values(as_float.ptr<float>(), static_cast<size_t>(as_float.total() * 3));
  seq.push_frame(values, resize_hw.first, resize_hw.second, 3);
}

}  // namespace

RawVideo load_frame_sequence(const fs::path& path, std::pair<int, int> resize_hw) {
  if (resize_hw.first < 1 || resize_hw.second < 1) throw InputError("resize_hw must be positive");
  if (!fs::exists(path)) throw InputError("video path does not exist: " + path.string());
  RawVideo video;
  video.source_id = path.filename().string();
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      cv::Mat img = cv::imread(f.string(), cv::IMREAD_COLOR);
      if (img.empty()) continue;
      append_mat(video.frames, img, resize_hw);
    }
  } else {
    cv::VideoCapture cap(path.string());
    if (!cap.isOpened()) throw InputError("no decoder available for " + path.string());
    cv::Mat img;
    while (cap.read(img)) {
      if (!img.empty()) append_mat(video.frames, img, resize_hw);
    }
  }
  if (video.frames.count() == 0) throw EmptySourceError("no decodable frames in " + path.string());
  return video;
}

void write_frame_sequence(const FrameSeq& frames, const fs::path& dir) {
  fs::create_directories(dir);
  const int h = static_cast<int>(frames.height());
  const int w = static_cast<int>(frames.width());
  const int c = static_cast<int>(frames.channels());
  if (c != 1 && c != 3) throw InputError("only 1- or 3-channel frames can be written");
  for (int64_t t = 0; t < frames.count(); ++t) {
    cv::Mat f(h, w, CV_32FC(c), const_cast<float*>(frames.frame(t).data()));
    cv::Mat bytes;
    f.convertTo(bytes, CV_8UC(c), 255.0);
    if (c == 3) cv::cvtColor(bytes, bytes, cv::COLOR_RGB2BGR);
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(t));
    if (!cv::imwrite((dir / name).string(), bytes)) throw InputError("failed to write " + (dir / name).string());
  }
}

void write_gray_png(const fs::path& file, std::span<const double> values, int height, int width) {
  if (static_cast<int64_t>(values.size()) != int64_t{height} * width) throw InputError("gray image size mismatch");
  cv::Mat img(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = std::round(values[static_cast<size_t>(y * width + x)]);
      img.at<uint8_t>(y, x) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  if (!cv::imwrite(file.string(), img)) throw InputError("failed to write " + file.string());
}

DatasetListing list_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("dataset root is not a directory: " + root.string());
  DatasetListing listing;
  const fs::path classes_file = root / "classes.txt";
  if (fs::exists(classes_file)) {
    std::ifstream in(classes_file);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) listing.class_names.push_back(line);
    }
  } else {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory()) listing.class_names.push_back(entry.path().filename().string());
    }
    std::sort(listing.class_names.begin(), listing.class_names.end());
  }
  for (size_t label = 0; label < listing.class_names.size(); ++label) {
    const fs::path class_dir = root / listing.class_names[label];
    if (!fs::is_directory(class_dir)) continue;
    std::vector<fs::path> entries;
    for (const auto& entry : fs::directory_iterator(class_dir)) entries.push_back(entry.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
      listing.videos.push_back({p, listing.class_names[label] + "/" + p.filename().string(), static_cast<int>(label)});
    }
  }
  return listing;
}

std::vector<RawVideo> load_dataset(const fs::path& root, std::pair<int, int> resize_hw) {
  const auto listing = list_dataset(root);
  std::vector<RawVideo> videos;
  videos.reserve(listing.videos.size());
  for (const auto& ref : listing.videos) {
    RawVideo v = load_frame_sequence(ref.path, resize_hw);
    v.source_id = ref.video_id;
    v.label = ref.label;
    videos.push_back(std::move(v));
  }
  if (videos.empty()) throw DatasetError("dataset at " + root.string() + " contains no videos");
  return videos;
}

void write_dataset(const fs::path& root, std::span<const RawVideo> videos, std::span<const std::string> class_names) {
  fs::create_directories(root);
  {
    std::ofstream out(root / "classes.txt");
    for (const auto& name : class_names) out << name << '\n';
  }
  for (size_t i = 0; i < videos.size(); ++i) {
    const RawVideo& v = videos[i];
    if (!v.label || *v.label < 0 || *v.label >= static_cast<int>(class_names.size())) {
      throw InputError("video " + v.source_id + " has no valid label");
    }
    char id[32];
    std::snprintf(id, sizeof(id), "v%05zu", i);
    write_frame_sequence(v.frames, root / class_names[static_cast<size_t>(*v.label)] / id);
  }
}

}  // namespace prp::video

#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "endn/data.hpp"
#include "endn/image.hpp"
#include "endn/rng.hpp"
#include "endn/tensor.hpp"

namespace endn::testutil {

inline Tensor4<double> random_tensor_d(Dims4 d, std::uint64_t seed, double lo = -1.0,
                                       double hi = 1.0) {
  Tensor4<double> t(d);
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.next_f64();
  return t;
}

inline Tensor4f random_tensor_f(Dims4 d, std::uint64_t seed, float lo = -1.0f,
                                float hi = 1.0f) {
  Tensor4f t(d);
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = lo + (hi - lo) * float(rng.next_f64());
  return t;
}

// Smooth synthetic "natural-ish" test image: a few random low-frequency
// cosines plus soft rectangles, squashed into [0.1, 0.9] so AWGN at the
// sigmas used in tests barely clips.
inline ImageBuffer synth_image(int h, int w, std::uint64_t seed, int channels = 1) {
  Rng rng(seed);
  ImageBuffer img;
  img.h = h;
  img.w = w;
  img.channels = channels;
  img.data.assign(std::size_t(channels) * h * w, 0.0f);

  for (int c = 0; c < channels; ++c) {
    double fx[3], fy[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
      fx[k] = 0.5 + 2.5 * rng.next_f64();
      fy[k] = 0.5 + 2.5 * rng.next_f64();
      ph[k] = 6.2831853 * rng.next_f64();
      amp[k] = 0.2 + 0.3 * rng.next_f64();
    }
    struct Rect {
      int y0, x0, y1, x1;
      double v;
    } rects[2];
    for (auto& r : rects) {
      r.y0 = int(rng.next_below(std::uint64_t(h)));
      r.x0 = int(rng.next_below(std::uint64_t(w)));
      r.y1 = std::min(h, r.y0 + 4 + int(rng.next_below(std::uint64_t(h / 2 + 1))));
      r.x1 = std::min(w, r.x0 + 4 + int(rng.next_below(std::uint64_t(w / 2 + 1))));
      r.v = rng.next_f64() - 0.5;
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
          v += amp[k] * std::cos(6.2831853 * (fx[k] * x / w + fy[k] * y / h) + ph[k]);
        for (const auto& r : rects)
          if (y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1) v += r.v;
        // squash to [0.1, 0.9]
        img.at(c, y, x) = float(0.5 + 0.4 * std::tanh(v));
      }
    }
  }
  return img;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    namespace fs = std::filesystem;
    path_ = fs::temp_directory_path() / ("endn-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_synth_dataset(const TempDir& dir, int count, int h, int w,
                                std::uint64_t seed, const std::string& prefix = "img") {
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03d.pgm", prefix.c_str(), i);
    save_image(synth_image(h, w, mix_seed(seed, i)), dir.file(name));
  }
}

}  // namespace endn::testutil

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "endn/image.hpp"
#include "endn/ops.hpp"
#include "endn/rng.hpp"
#include "endn/tensor.hpp"

namespace endn {

// Paired training patches. noisy = clean + AWGN and is deliberately NOT
// clamped to [0,1]: clamping would truncate the noise distribution near the
// range borders and break the additive model.
struct PatchBatch {
  Tensor4f noisy;
  Tensor4f clean;
  double sigma8 = 0.0;  // noise std in 8-bit units (25 means 25/255 here)
};

// noisy = clean + N(0, (sigma8/255)^2) i.i.d. per element
template <typename T>
Tensor4<T> add_awgn(const Tensor4<T>& clean, double sigma8, Rng& rng) {
  if (sigma8 < 0) throw ConfigError("add_awgn: sigma must be >= 0");
  const double s = sigma8 / 255.0;
  Tensor4<T> noisy(clean.dims());
  for (std::int64_t i = 0; i < clean.size(); ++i)
    noisy[i] = T(double(clean[i]) + s * rng.next_gaussian());
  return noisy;
}

inline Tensor4f crop_tensor(const ImageBuffer& img, int y0, int x0, int size) {
  Tensor4f t(1, img.channels, size, size);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) t.at(0, c, y, x) = img.at(c, y0 + y, x0 + x);
  return t;
}

// Stride-spaced tiling; the last row/column of tiles is aligned to the image
// border so the whole image is covered.
inline std::vector<Tensor4f> extract_patches_grid(const ImageBuffer& img, int size,
                                                  int stride) {
  if (size < 1 || size > std::min(img.h, img.w))
    throw ConfigError("patch size " + std::to_string(size) + " exceeds image " +
                      std::to_string(img.h) + "x" + std::to_string(img.w));
  if (stride < 1) throw ConfigError("patch stride must be >= 1");
  std::vector<int> ys, xs;
  for (int y = 0;; y += stride) {
    if (y + size >= img.h) {
      ys.push_back(img.h - size);
      break;
    }
    ys.push_back(y);
  }
  for (int x = 0;; x += stride) {
    if (x + size >= img.w) {
      xs.push_back(img.w - size);
      break;
    }
    xs.push_back(x);
  }
  std::vector<Tensor4f> out;
  out.reserve(ys.size() * xs.size());
  for (int y : ys)
    for (int x : xs) out.push_back(crop_tensor(img, y, x, size));
  return out;
}

inline std::vector<Tensor4f> extract_patches_random(const ImageBuffer& img, int size,
                                                    int count, Rng& rng) {
  if (size < 1 || size > std::min(img.h, img.w))
    throw ConfigError("patch size " + std::to_string(size) + " exceeds image " +
                      std::to_string(img.h) + "x" + std::to_string(img.w));
  std::vector<Tensor4f> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int y0 = int(rng.next_below(std::uint64_t(img.h - size + 1)));
    const int x0 = int(rng.next_below(std::uint64_t(img.w - size + 1)));
    out.push_back(crop_tensor(img, y0, x0, size));
  }
  return out;
}

// The paper's augmentation set. All ops keep values in [0, 1]; geometric ones
// preserve the value multiset exactly.
enum class Augment { none, rot90, rot180, rot270, flip, blur, contrast_stretch, invert };

constexpr int kAugmentCount = 8;

inline Tensor4f augment(const Tensor4f& patch, Augment op) {
  switch (op) {
    case Augment::none:
      return patch;
    case Augment::rot90: {  // clockwise quarter turn
      Tensor4f out(patch.n(), patch.c(), patch.w(), patch.h());
      for (int n = 0; n < patch.n(); ++n)
        for (int c = 0; c < patch.c(); ++c)
          for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x)
              out.at(n, c, y, x) = patch.at(n, c, patch.h() - 1 - x, y);
      return out;
    }
    case Augment::rot180: {
      Tensor4f out(patch.dims());
      for (int n = 0; n < patch.n(); ++n)
        for (int c = 0; c < patch.c(); ++c)
          for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x)
              out.at(n, c, y, x) = patch.at(n, c, patch.h() - 1 - y, patch.w() - 1 - x);
      return out;
    }
    case Augment::rot270: {
      Tensor4f out(patch.n(), patch.c(), patch.w(), patch.h());
      for (int n = 0; n < patch.n(); ++n)
        for (int c = 0; c < patch.c(); ++c)
          for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x)
              out.at(n, c, y, x) = patch.at(n, c, x, patch.w() - 1 - y);
      return out;
    }
    case Augment::flip: {  // horizontal mirror
      Tensor4f out(patch.dims());
      for (int n = 0; n < patch.n(); ++n)
        for (int c = 0; c < patch.c(); ++c)
          for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x)
              out.at(n, c, y, x) = patch.at(n, c, y, patch.w() - 1 - x);
      return out;
    }
    case Augment::blur:
      // 3x3 Gaussian, sigma 0.8; renormalized borders keep the [0,1] range
      return ops::gblur_renorm(patch, ops::BlurSpec{3, 0.8});
    case Augment::contrast_stretch: {
      float lo = patch[0], hi = patch[0];
      for (std::int64_t i = 0; i < patch.size(); ++i) {
        lo = std::min(lo, patch[i]);
        hi = std::max(hi, patch[i]);
      }
      if (hi == lo) return patch;
      Tensor4f out(patch.dims());
      const float inv = 1.0f / (hi - lo);
      for (std::int64_t i = 0; i < patch.size(); ++i) out[i] = (patch[i] - lo) * inv;
      return out;
    }
    case Augment::invert: {
      Tensor4f out(patch.dims());
      for (std::int64_t i = 0; i < patch.size(); ++i) out[i] = 1.0f - patch[i];
      return out;
    }
  }
  throw ConfigError("unknown augment op");
}

// A directory of images; the manifest is the lexicographically sorted listing.
struct Dataset {
  std::vector<std::string> paths;
  std::vector<ImageBuffer> images;
  int channels = 0;

  static Dataset load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    Dataset ds;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw ConfigError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = entry.path().extension().string();
      if (ext == ".png" || ext == ".pgm" || ext == ".ppm")
        ds.paths.push_back(entry.path().string());
    }
    std::sort(ds.paths.begin(), ds.paths.end());
    if (ds.paths.empty())
      throw ConfigError("no .png/.pgm/.ppm images in " + dir);
    for (const std::string& p : ds.paths) {
      ds.images.push_back(load_image(p));
      if (ds.channels == 0) {
        ds.channels = ds.images.back().channels;
      } else if (ds.images.back().channels != ds.channels) {
        throw ConfigError("mixed channel counts in dataset: " + p);
      }
    }
    return ds;
  }
};

struct BatchSpec {
  int batch_size = 16;
  int patch_size = 64;
  double sigma8 = 25.0;
  bool blind = false;      // sample sigma per batch from {15, 25, 50}
  bool augment = true;
};

// Deterministic in the rng: clean patches are cropped and augmented first,
// then noise is added, so noisy - clean is exactly the sampled Gaussian field.
inline PatchBatch make_batch(const Dataset& ds, const BatchSpec& spec, Rng& rng) {
  PatchBatch b;
  b.sigma8 = spec.sigma8;
  if (spec.blind) {
    static constexpr double kSigmas[3] = {15.0, 25.0, 50.0};
    b.sigma8 = kSigmas[rng.next_below(3)];
  }
  std::vector<Tensor4f> cleans;
  cleans.reserve(spec.batch_size);
  for (int k = 0; k < spec.batch_size; ++k) {
    const ImageBuffer& img = ds.images[rng.next_below(ds.images.size())];
    if (spec.patch_size > std::min(img.h, img.w))
      throw ConfigError("patch size " + std::to_string(spec.patch_size) +
                        " exceeds image " + std::to_string(img.h) + "x" +
                        std::to_string(img.w));
    const int y0 = int(rng.next_below(std::uint64_t(img.h - spec.patch_size + 1)));
    const int x0 = int(rng.next_below(std::uint64_t(img.w - spec.patch_size + 1)));
    Tensor4f patch = crop_tensor(img, y0, x0, spec.patch_size);
    if (spec.augment)
      patch = augment(patch, Augment(rng.next_below(kAugmentCount)));
    cleans.push_back(std::move(patch));
  }
  b.clean = Tensor4f(spec.batch_size, ds.channels, spec.patch_size, spec.patch_size);
  for (int k = 0; k < spec.batch_size; ++k)
    std::memcpy(b.clean.plane(k, 0), cleans[k].data(), sizeof(float) * cleans[k].size());
  b.noisy = add_awgn(b.clean, b.sigma8, rng);
  return b;
}

}  // namespace endn

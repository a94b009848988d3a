#include "endn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace endn {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageBuffer from_interleaved(int h, int w, int channels, const std::vector<png_byte>& rows) {
  ImageBuffer img;
  img.h = h;
  img.w = w;
  img.channels = channels;
  img.data.resize(std::size_t(channels) * h * w);
  const float inv = 1.0f / 255.0f;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = float(rows[(std::size_t(y) * w + x) * channels + c]) * inv;
  return img;
}

ImageBuffer load_png(FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("not a valid PNG file: " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported bit depth 16 in " + path + " (8-bit only)");
  }
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  const int channels = int(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported channel count " + std::to_string(channels) + " in " + path);
  }

  pixels.resize(std::size_t(h) * w * channels);
  row_ptrs.resize(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + std::size_t(y) * w * channels;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_interleaved(h, w, channels, pixels);
}

// Binary PNM: "P5" grayscale, "P6" RGB, maxval 255.
ImageBuffer load_pnm(FILE* f, const std::string& path) {
  auto next_token = [&]() -> std::string {
    std::string tok;
    int ch;
    while ((ch = std::fgetc(f)) != EOF) {
      if (ch == '#') {  // comment to end of line
        while ((ch = std::fgetc(f)) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(char(ch));
    }
    return tok;
  };

  const std::string magic = next_token();
  const int channels = magic == "P5" ? 1 : magic == "P6" ? 3 : 0;
  if (channels == 0) throw FormatError("unsupported image format in " + path);

  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw FormatError("malformed PNM header in " + path);
  }
  if (w < 1 || h < 1) throw FormatError("bad PNM dimensions in " + path);
  if (maxval != 255)
    throw FormatError("unsupported PNM maxval " + std::to_string(maxval) + " in " + path +
                      " (8-bit only)");

  std::vector<png_byte> pixels(std::size_t(h) * w * channels);
  if (std::fread(pixels.data(), 1, pixels.size(), f) != pixels.size())
    throw FormatError("PNM pixel data truncated in " + path);
  return from_interleaved(h, w, channels, pixels);
}

void save_png(const ImageBuffer& img, const std::vector<png_byte>& pixels,
              const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.h);
  for (int y = 0; y < img.h; ++y)
    rows[y] = const_cast<png_bytep>(pixels.data() + std::size_t(y) * img.w * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_pnm(const ImageBuffer& img, const std::vector<png_byte>& pixels,
              const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path);
  const char* magic = img.channels == 1 ? "P5" : "P6";
  std::fprintf(f.get(), "%s\n%d %d\n255\n", magic, img.w, img.h);
  if (std::fwrite(pixels.data(), 1, pixels.size(), f.get()) != pixels.size())
    throw IoError("short write: " + path);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ImageBuffer load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open image: " + path);

  unsigned char sig[8] = {};
  const std::size_t got = std::fread(sig, 1, sizeof(sig), f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(f.get(), path);
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6'))
    return load_pnm(f.get(), path);
  throw FormatError("unsupported image format in " + path + " (PNG, PGM or PPM expected)");
}

void save_image(const ImageBuffer& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw ConfigError("save_image: channels must be 1 or 3");
  if (img.h < 1 || img.w < 1 ||
      img.data.size() != std::size_t(img.channels) * img.h * img.w)
    throw ConfigError("save_image: inconsistent image buffer");

  std::vector<png_byte> pixels(img.data.size());
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        pixels[(std::size_t(y) * img.w + x) * img.channels + c] =
            png_byte(std::lround(v * 255.0f));
      }

  if (ends_with(path, ".png")) {
    save_png(img, pixels, path);
  } else if (ends_with(path, ".pgm")) {
    if (img.channels != 1) throw ConfigError("PGM is grayscale; image has 3 channels");
    save_pnm(img, pixels, path);
  } else if (ends_with(path, ".ppm")) {
    if (img.channels != 3) throw ConfigError("PPM is color; image has 1 channel");
    save_pnm(img, pixels, path);
  } else {
    throw ConfigError("unknown output image extension (use .png/.pgm/.ppm): " + path);
  }
}

Tensor4f image_to_tensor(const ImageBuffer& img) {
  Tensor4f t(1, img.channels, img.h, img.w);
  std::memcpy(t.data(), img.data.data(), sizeof(float) * img.data.size());
  return t;
}

ImageBuffer tensor_to_image(const Tensor4f& t) {
  if (t.n() != 1) throw ShapeError("tensor_to_image: batch dimension must be 1");
  if (t.c() != 1 && t.c() != 3) throw ShapeError("tensor_to_image: channels must be 1 or 3");
  ImageBuffer img;
  img.h = t.h();
  img.w = t.w();
  img.channels = t.c();
  img.data.resize(std::size_t(t.size()));
  for (std::int64_t i = 0; i < t.size(); ++i) img.data[i] = std::clamp(t[i], 0.0f, 1.0f);
  return img;
}

}  // namespace endn

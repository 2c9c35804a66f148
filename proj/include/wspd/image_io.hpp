#pragma once

#include <png.h>

#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace wspd {

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline GrayImage decode_pgm(const std::string& data, const std::string& name) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < data.size() &&
           !std::isspace(static_cast<unsigned char>(data[pos]))) {
      tok += data[pos++];
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P2" && magic != "P5") throw IoError(name + ": not a PGM file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw IoError(name + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError(name + ": unsupported PGM geometry or depth");
  }
  GrayImage img(w, h);
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    if (data.size() < pos + img.pixels.size()) {
      throw IoError(name + ": truncated PGM raster");
    }
    std::memcpy(img.pixels.data(), data.data() + pos, img.pixels.size());
  } else {
    for (auto& p : img.pixels) {
      const std::string tok = next_token();
      if (tok.empty()) throw IoError(name + ": truncated PGM raster");
      p = static_cast<std::uint8_t>(std::stoi(tok));
    }
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(p * 255 / maxval);
  }
  return img;
}

inline GrayImage decode_png(const std::string& data, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
    throw IoError(name + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(name + ": " + image.message);
  }
  return img;
}

}  // namespace detail

inline GrayImage decode_image(const std::string& data, const std::string& name = "image") {
  if (data.size() >= 8 && std::memcmp(data.data(), "\x89PNG", 4) == 0) {
    return detail::decode_png(data, name);
  }
  return detail::decode_pgm(data, name);
}

inline GrayImage load_image(const std::filesystem::path& path) {
  return decode_image(detail::read_file_bytes(path), path.string());
}

inline std::string encode_png(const GrayImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, img.pixels.data(), 0,
                                       nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0,
                                 img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

inline void save_png(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string bytes = encode_png(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Loads corpus images on demand, resolving relative paths against a root
// directory. Thread-safe; decoded rasters are cached up to `capacity` entries.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path root = {}, std::size_t capacity = 64)
      : root_(std::move(root)), capacity_(capacity) {}

  std::filesystem::path resolve(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.is_relative() && !root_.empty()) return root_ / p;
    return p;
  }

  std::shared_ptr<const GrayImage> get(const std::string& path) {
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(path); it != cache_.end()) return it->second;
    }
    auto img = std::make_shared<const GrayImage>(load_image(resolve(path)));
    std::lock_guard lock(mu_);
    if (cache_.size() >= capacity_) cache_.erase(cache_.begin());
    cache_.emplace(path, img);
    return img;
  }

 private:
  std::filesystem::path root_;
  std::size_t capacity_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const GrayImage>> cache_;
};

}  // namespace wspd

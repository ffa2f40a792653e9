#include "oplanes/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace oplanes {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

// Reads a whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
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
}

int header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in);
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw ParseError("bad header field '" + tok + "' in " + path.string());
  }
}

}  // namespace

void save_pfm(const DepthMap& depth, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
  for (int y = depth.height - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(&depth.at(0, y)), std::streamsize(sizeof(float)) * depth.width);
  if (!out) throw IoError("failed writing " + path.string());
}

DepthMap load_pfm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string magic = header_token(in);
  if (magic != "Pf") throw ParseError("not a single-channel PFM: " + path.string());
  const int w = header_int(in, path), h = header_int(in, path);
  const std::string scale_tok = header_token(in);
  const double scale = std::stod(scale_tok);
  if (scale >= 0) throw ParseError("big-endian PFM not supported: " + path.string());
  DepthMap depth(w, h);
  for (int y = h - 1; y >= 0; --y)
    in.read(reinterpret_cast<char*>(&depth.at(0, y)), std::streamsize(sizeof(float)) * w);
  if (!in) throw ParseError("truncated PFM: " + path.string());
  return depth;
}

void save_dpt(const DepthMap& depth, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "DPT " << depth.width << ' ' << depth.height << '\n';
  out.write(reinterpret_cast<const char*>(depth.data.data()), std::streamsize(sizeof(float) * depth.data.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

DepthMap load_dpt(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::istringstream hs(line);
  std::string magic;
  int w = 0, h = 0;
  if (!(hs >> magic >> w >> h) || magic != "DPT" || w <= 0 || h <= 0)
    throw ParseError("bad DPT header in " + path.string());
  DepthMap depth(w, h);
  in.read(reinterpret_cast<char*>(depth.data.data()), std::streamsize(sizeof(float) * depth.data.size()));
  if (!in) throw ParseError("truncated DPT: " + path.string());
  return depth;
}

DepthMap load_depth(const std::filesystem::path& path) {
  auto in = open_in(path);
  char head[3] = {};
  in.read(head, 3);
  if (head[0] == 'P' && head[1] == 'f') return load_pfm(path);
  if (std::strncmp(head, "DPT", 3) == 0) return load_dpt(path);
  throw ParseError("unrecognized depth format: " + path.string());
}

void save_mask_pgm(const Mask& mask, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<char> bytes(mask.data.size());
  std::transform(mask.data.begin(), mask.data.end(), bytes.begin(), [](std::uint8_t v) { return char(v ? 255 : 0); });
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Mask load_mask_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (header_token(in) != "P5") throw ParseError("not a binary PGM: " + path.string());
  const int w = header_int(in, path), h = header_int(in, path), maxval = header_int(in, path);
  if (maxval <= 0 || maxval > 255) throw ParseError("only 8-bit PGM supported: " + path.string());
  Mask mask(w, h);
  std::vector<char> bytes(mask.data.size());
  in.read(bytes.data(), std::streamsize(bytes.size()));
  if (!in) throw ParseError("truncated PGM: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.data[i] = bytes[i] != 0 ? 1 : 0;
  return mask;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void save_png(const RgbImage& rgb, const std::filesystem::path& path) {
  if (rgb.channels != 3) throw ShapeError("save_png expects a 3-channel image");
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> bytes(rgb.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = png_byte(std::lround(std::clamp(rgb.data[i], 0.0f, 1.0f) * 255.0f));
  std::vector<png_bytep> rows(rgb.height);
  for (int y = 0; y < rgb.height; ++y) rows[y] = bytes.data() + std::size_t(y) * rgb.width * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, rgb.width, rgb.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage load_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  RgbImage img;
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("failed reading PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = int(png_get_image_width(png, info)), h = int(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("unsupported PNG layout: " + path.string());
  }
  bytes.resize(std::size_t(w) * h * 3);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + std::size_t(y) * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  img = RgbImage(w, h, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = float(bytes[i]) / 255.0f;
  return img;
}

}  // namespace oplanes

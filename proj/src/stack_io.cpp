#include <cmath>
#include <cstring>
#include <fstream>

#include "oplanes/representation.hpp"

// OPLN layout (little-endian):
//   "OPLN" | u16 version | u16 H' | u16 W' | u16 N |
//   6 x f64 (fx, fy, cx, cy, width, height) | N x f32 depths |
//   binary stacks: N planes of ceil(H'W'/8) bytes, row-major, MSB first
//   probability stacks: N x H' x W' f32
// The two payloads are told apart by their size.

namespace oplanes {

namespace {

constexpr std::uint16_t kStackVersion = 1;

template <typename V>
void put(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::ifstream& in, const std::filesystem::path& path) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw ParseError("truncated OPlane stack file " + path.string());
  return v;
}

}  // namespace

void save_oplane_stack(const OPlaneStack& stack, const std::filesystem::path& path) {
  stack.validate();
  const int h = stack.height(), w = stack.width();
  if (h > 65535 || w > 65535 || stack.planes.size() > 65535) throw ConfigError("OPlane stack too large for OPLN");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("OPLN", 4);
  put<std::uint16_t>(out, kStackVersion);
  put<std::uint16_t>(out, std::uint16_t(h));
  put<std::uint16_t>(out, std::uint16_t(w));
  put<std::uint16_t>(out, std::uint16_t(stack.planes.size()));
  const CameraIntrinsics& c = stack.camera;
  for (double v : {c.fx, c.fy, c.cx, c.cy, double(c.width), double(c.height)}) put<double>(out, v);
  for (const OPlane& p : stack.planes) put<float>(out, float(p.z));
  const std::size_t n_pix = std::size_t(h) * w;
  if (stack.binary) {
    std::vector<char> bits((n_pix + 7) / 8);
    for (const OPlane& p : stack.planes) {
      std::fill(bits.begin(), bits.end(), 0);
      for (std::size_t i = 0; i < n_pix; ++i)
        if (p.values.data[i] >= 0.5f) bits[i / 8] |= char(0x80 >> (i % 8));
      out.write(bits.data(), std::streamsize(bits.size()));
    }
  } else {
    for (const OPlane& p : stack.planes)
      out.write(reinterpret_cast<const char*>(p.values.data.data()), std::streamsize(n_pix * sizeof(float)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

OPlaneStack load_oplane_stack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "OPLN", 4) != 0) throw ParseError("not an OPLN file: " + path.string());
  const auto version = get<std::uint16_t>(in, path);
  if (version != kStackVersion) throw ParseError("unsupported OPLN version " + std::to_string(version));
  const int h = get<std::uint16_t>(in, path), w = get<std::uint16_t>(in, path);
  const int n = get<std::uint16_t>(in, path);
  double cam[6];
  for (double& v : cam) v = get<double>(in, path);
  OPlaneStack stack;
  stack.camera = {cam[0], cam[1], cam[2], cam[3], int(cam[4]), int(cam[5])};
  if (stack.camera.width != w || stack.camera.height != h)
    throw ParseError("OPLN camera size disagrees with plane size in " + path.string());
  std::vector<float> z(n);
  for (float& v : z) v = get<float>(in, path);

  const auto header_end = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload = std::size_t(in.tellg() - header_end);
  in.seekg(header_end);
  const std::size_t n_pix = std::size_t(h) * w;
  const std::size_t packed = (n_pix + 7) / 8;
  if (payload == packed * n)
    stack.binary = true;
  else if (payload == n_pix * sizeof(float) * n)
    stack.binary = false;
  else
    throw ParseError("OPLN payload size matches neither bit-packed nor float planes: " + path.string());

  std::vector<char> bits(packed);
  for (int k = 0; k < n; ++k) {
    OPlane p{z[k], Image<float>(w, h)};
    if (stack.binary) {
      in.read(bits.data(), std::streamsize(packed));
      for (std::size_t i = 0; i < n_pix; ++i) p.values.data[i] = (bits[i / 8] & (0x80 >> (i % 8))) ? 1.0f : 0.0f;
    } else {
      in.read(reinterpret_cast<char*>(p.values.data.data()), std::streamsize(n_pix * sizeof(float)));
    }
    if (!in) throw ParseError("truncated OPLN payload: " + path.string());
    stack.planes.push_back(std::move(p));
  }
  if (n > 0) stack.range = {z.front(), z.back()};
  stack.validate();
  return stack;
}

}  // namespace oplanes

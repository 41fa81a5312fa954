#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "splatworld/common.hpp"

namespace splatworld::io {

// PFM: "Pf" (1 channel) or "PF" (3 channels), dimensions, scale -1.0 for
// little-endian floats, rows stored bottom-to-top. Lossless float transport
// for depth and feature maps.
inline void write_pfm(const Image<float>& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeError("write_pfm: only 1- or 3-channel images");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_pfm: cannot open " + path);
  f << (img.channels == 1 ? "Pf" : "PF") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int y = img.height - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(img.at(0, y)),
            std::streamsize(sizeof(float)) * img.width * img.channels);
  if (!f) throw IoError("write_pfm: write failed for " + path);
}

inline Image<float> read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_pfm: cannot open " + path);
  std::string tag;
  int width = 0, height = 0;
  double scale = 0.0;
  f >> tag >> width >> height >> scale;
  if (!f || (tag != "Pf" && tag != "PF") || width < 1 || height < 1)
    throw IoError("read_pfm: malformed header in " + path);
  if (scale >= 0) throw IoError("read_pfm: big-endian PFM not supported: " + path);
  f.get();  // the single whitespace byte after the scale line
  Image<float> img(width, height, tag == "Pf" ? 1 : 3);
  for (int y = height - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(img.at(0, y)),
           std::streamsize(sizeof(float)) * width * img.channels);
    if (!f) throw IoError("read_pfm: truncated pixel data in " + path);
  }
  return img;
}

}  // namespace splatworld::io

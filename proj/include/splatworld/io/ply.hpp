#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "splatworld/core/gaussian.hpp"

namespace splatworld::io {

// Binary little-endian PLY in the de-facto splatting viewer layout: 23 float
// properties per vertex. Opacity is stored as its pre-sigmoid logit and scale
// as its pre-exp log, matching how viewers re-activate them.
template <class S> void export_ply(const DynamicScene<S>& scene, const std::string& path) {
  if (scene.primitives.empty()) throw EmptySceneError("export_ply: empty scene");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("export_ply: cannot open " + path);
  f << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.primitives.size() << "\n";
  static const char* props[] = {"x",       "y",       "z",       "f_dc_0",  "f_dc_1",  "f_dc_2",
                                "f_rest_0", "f_rest_1", "f_rest_2", "f_rest_3", "f_rest_4",
                                "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8", "opacity",
                                "scale_0", "scale_1", "scale_2", "rot_0",   "rot_1",   "rot_2",
                                "rot_3"};
  for (const char* p : props) f << "property float " << p << "\n";
  f << "end_header\n";
  for (const auto& g : scene.primitives) {
    float row[23];
    int k = 0;
    for (int i = 0; i < 3; ++i) row[k++] = float(g.position[i]);
    for (int c = 0; c < 3; ++c) row[k++] = float(g.sh_coeffs[4 * c]);           // DC per channel
    for (int c = 0; c < 3; ++c)
      for (int l = 1; l < 4; ++l) row[k++] = float(g.sh_coeffs[4 * c + l]);     // linear terms
    const double o = std::min(1.0 - 1e-6, std::max(1e-6, double(g.opacity)));
    row[k++] = float(std::log(o / (1.0 - o)));
    for (int i = 0; i < 3; ++i) row[k++] = float(std::log(double(g.scale[i])));
    for (int i = 0; i < 4; ++i) row[k++] = float(g.rotation[i]);
    f.write(reinterpret_cast<const char*>(row), sizeof(row));
  }
  if (!f) throw IoError("export_ply: write failed for " + path);
}

// Inverse of export_ply. Semantic vectors are not part of the viewer layout
// and come back zero.
template <class S> DynamicScene<S> import_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("import_ply: cannot open " + path);
  std::string line;
  size_t count = 0;
  int nprops = 0;
  bool header_done = false;
  if (!std::getline(f, line) || line != "ply") throw IoError("import_ply: not a PLY: " + path);
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "element") {
      ss >> word >> count;
      if (word != "vertex") throw IoError("import_ply: unexpected element in " + path);
    } else if (word == "property") {
      ++nprops;
    } else if (word == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done || count == 0 || nprops != 23)
    throw IoError("import_ply: unsupported layout in " + path);
  DynamicScene<S> scene;
  scene.primitives.resize(count);
  for (auto& g : scene.primitives) {
    float row[23];
    f.read(reinterpret_cast<char*>(row), sizeof(row));
    if (!f) throw IoError("import_ply: truncated vertex data in " + path);
    int k = 0;
    for (int i = 0; i < 3; ++i) g.position[i] = S(row[k++]);
    float dc[3];
    for (int c = 0; c < 3; ++c) dc[c] = row[k++];
    for (int c = 0; c < 3; ++c) {
      g.sh_coeffs[4 * c] = S(dc[c]);
      for (int l = 1; l < 4; ++l) g.sh_coeffs[4 * c + l] = S(row[k++]);
    }
    const double logit = row[k++];
    g.opacity = S(1.0 / (1.0 + std::exp(-logit)));
    for (int i = 0; i < 3; ++i) g.scale[i] = S(std::exp(double(row[k++])));
    for (int i = 0; i < 4; ++i) g.rotation[i] = S(row[k++]);
    g.semantic = Vec3<S>::Zero();
  }
  return scene;
}

}  // namespace splatworld::io

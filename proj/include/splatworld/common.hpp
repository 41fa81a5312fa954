#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace splatworld {

template <class S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <class S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S> using Vec4 = Eigen::Matrix<S, 4, 1>;
template <class S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <class S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <class S> using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S> using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

// Error hierarchy. Every module throws one of these; the CLI maps them to
// exit code 2 with a one-line message.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidParameterError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DegenerateRotationError : Error {
  using Error::Error;
};
struct EmptySceneError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// Interleaved image buffer, row-major, `channels` values per pixel.
template <class T> struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T(0))
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  T* at(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * channels; }
  const T* at(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  template <class U> Image<U> cast() const {
    Image<U> out(width, height, channels);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using ImageF = Image<float>;
using ImageD = Image<double>;

// Static partition over [0, n); identical results for any thread count as
// long as the body writes disjoint indices.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& body) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  size_t nthreads = std::min<size_t>(static_cast<size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t] {
      for (size_t i = t; i < n; i += nthreads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

template <class S> bool all_finite(const Eigen::Ref<const VecX<S>>& v) {
  return v.allFinite();
}

// Axis-aligned workspace box. Containment is half-open: [min, max).
struct Bounds3 {
  Vec3<double> min = Vec3<double>::Zero();
  Vec3<double> max = Vec3<double>::Zero();

  Vec3<double> extent() const { return max - min; }
  bool contains(const Vec3<double>& p) const {
    for (int k = 0; k < 3; ++k)
      if (!(p[k] >= min[k] && p[k] < max[k])) return false;
    return true;
  }
};

inline void validate(const Bounds3& b) {
  for (int k = 0; k < 3; ++k)
    if (!(b.max[k] > b.min[k])) throw InvalidParameterError("bounds: zero or negative extent");
}

}  // namespace splatworld

#include "rsplat/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#ifndef RSPLAT_VERSION
#define RSPLAT_VERSION "unknown"
#endif

namespace rsplat {

Image downsample(const Image& img, int factor) {
  require(factor >= 1, "downsample: factor must be >= 1");
  if (factor == 1) return img;
  const int w = (img.width + factor - 1) / factor;
  const int h = (img.height + factor - 1) / factor;
  Image out(w, h, img.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xe = std::min(img.width, (x + 1) * factor);
      const int ye = std::min(img.height, (y + 1) * factor);
      const int n = (xe - x * factor) * (ye - y * factor);
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int yy = y * factor; yy < ye; ++yy)
          for (int xx = x * factor; xx < xe; ++xx) s += img.at(xx, yy, c);
        out.at(x, y, c) = s / n;
      }
    }
  }
  return out;
}

Image crop(const Image& img, const Region& r) {
  require(!r.empty() && r.x0 >= 0 && r.y0 >= 0 && r.x1 <= img.width && r.y1 <= img.height,
          "crop: region outside image");
  Image out(r.width(), r.height(), img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x + r.x0, y + r.y0, c);
  return out;
}

Image channel_mean(const Image& img) {
  Image out(img.width, img.height, 1);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    double s = 0.0;
    for (int c = 0; c < img.channels; ++c) s += img.data[p * img.channels + c];
    out.data[p] = s / img.channels;
  }
  return out;
}

int thread_count() {
  if (const char* env = std::getenv("RSPLAT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

const char* version_string() { return RSPLAT_VERSION; }

}  // namespace rsplat

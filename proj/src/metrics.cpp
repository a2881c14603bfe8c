#include "rsplat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace rsplat {

namespace {

std::vector<double> gaussian_kernel(const SsimParams& p) {
  std::vector<double> k(p.window);
  const int r = p.window / 2;
  double s = 0;
  for (int i = 0; i < p.window; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2 * p.sigma * p.sigma));
    s += k[i];
  }
  for (double& v : k) v /= s;
  return k;
}

/// Separable filter over a single-channel plane. With `normalize`, weights are renormalized over the
/// in-bounds part of the window; otherwise out-of-bounds taps are dropped.
std::vector<double> filter(const std::vector<double>& in, int w, int h, const std::vector<double>& k, bool normalize) {
  const int r = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0, z = 0;
      for (int i = -r; i <= r; ++i) {
        const int xx = x + i;
        if (xx < 0 || xx >= w) continue;
        s += k[i + r] * in[y * w + xx];
        z += k[i + r];
      }
      tmp[y * w + x] = normalize ? s / z : s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0, z = 0;
      for (int i = -r; i <= r; ++i) {
        const int yy = y + i;
        if (yy < 0 || yy >= h) continue;
        s += k[i + r] * tmp[yy * w + x];
        z += k[i + r];
      }
      out[y * w + x] = normalize ? s / z : s;
    }
  }
  return out;
}

/// In-bounds window mass at every pixel (product of the per-axis masses).
std::vector<double> window_mass(int w, int h, const std::vector<double>& k) {
  std::vector<double> ones(static_cast<std::size_t>(w) * h, 1.0);
  return filter(ones, w, h, k, false);
}

std::vector<double> plane(const Image& img, int c) {
  std::vector<double> out(img.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.data[i * img.channels + c];
  return out;
}

struct Stats {
  std::vector<double> mx, my, exx, eyy, exy;
};

Stats local_stats(const std::vector<double>& x, const std::vector<double>& y, int w, int h,
                  const std::vector<double>& k) {
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  return {filter(x, w, h, k, true), filter(y, w, h, k, true), filter(xx, w, h, k, true), filter(yy, w, h, k, true),
          filter(xy, w, h, k, true)};
}

}  // namespace

Image ssim_map(const Image& a, const Image& b, const SsimParams& p) {
  require(a.same_shape(b), "ssim_map: images differ in shape");
  const auto k = gaussian_kernel(p);
  const double c1 = p.k1 * p.k1, c2 = p.k2 * p.k2;
  Image out(a.width, a.height, a.channels);
  for (int c = 0; c < a.channels; ++c) {
    const Stats s = local_stats(plane(a, c), plane(b, c), a.width, a.height, k);
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
      const double mx = s.mx[i], my = s.my[i];
      const double vx = s.exx[i] - mx * mx, vy = s.eyy[i] - my * my, cxy = s.exy[i] - mx * my;
      out.data[i * a.channels + c] =
          ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return out;
}

void ssim_map_backward(const Image& a, const Image& b, const Image& d_map, Image& d_a, const SsimParams& p) {
  require(a.same_shape(b) && a.same_shape(d_map) && a.same_shape(d_a), "ssim_map_backward: shape mismatch");
  const auto k = gaussian_kernel(p);
  const double c1 = p.k1 * p.k1, c2 = p.k2 * p.k2;
  const int w = a.width, h = a.height;
  const auto mass = window_mass(w, h, k);
  const std::size_t n = a.pixel_count();
  for (int c = 0; c < a.channels; ++c) {
    const auto x = plane(a, c), y = plane(b, c);
    const Stats s = local_stats(x, y, w, h, k);
    std::vector<double> ga(n), gb(n), gc(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = d_map.data[i * a.channels + c];
      const double mx = s.mx[i], my = s.my[i];
      const double vx = s.exx[i] - mx * mx, vy = s.eyy[i] - my * my, cxy = s.exy[i] - mx * my;
      const double a1 = 2 * mx * my + c1, a2 = 2 * cxy + c2;
      const double b1 = mx * mx + my * my + c1, b2 = vx + vy + c2;
      const double val = a1 * a2 / (b1 * b2);
      // partials with respect to (mean_x, E[x^2], E[xy]) with the others held fixed
      const double d_mx = (2 * my * a2 - 2 * my * a1) / (b1 * b2) - val * (2 * mx * b2 - 2 * mx * b1) / (b1 * b2);
      const double d_exx = -val / b2;
      const double d_exy = 2 * a1 / (b1 * b2);
      ga[i] = g * d_mx / mass[i];
      gb[i] = g * d_exx / mass[i];
      gc[i] = g * d_exy / mass[i];
    }
    const auto ta = filter(ga, w, h, k, false);
    const auto tb = filter(gb, w, h, k, false);
    const auto tc = filter(gc, w, h, k, false);
    for (std::size_t i = 0; i < n; ++i) d_a.data[i * a.channels + c] += ta[i] + 2 * x[i] * tb[i] + y[i] * tc[i];
  }
}

double psnr(const Image& a, const Image& b, const Region& r) {
  require(a.same_shape(b), "psnr: images differ in shape");
  require(!r.empty(), "psnr: empty region");
  double se = 0;
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x)
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        se += d * d;
      }
  const double mse = se / (static_cast<double>(r.width()) * r.height() * a.channels);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const Image& a, const Image& b) { return psnr(a, b, Region::full(a.width, a.height)); }

double ssim(const Image& a, const Image& b, const Region& r, const SsimParams& p) {
  require(a.same_shape(b), "ssim: images differ in shape");
  const Image m = ssim_map(crop(a, r), crop(b, r), p);
  double s = 0;
  for (double v : m.data) s += v;
  return s / static_cast<double>(m.data.size());
}

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  return ssim(a, b, Region::full(a.width, a.height), p);
}

MaskIou mask_iou(const Image& pred, const Image& oracle) {
  require(pred.width == oracle.width && pred.height == oracle.height && pred.channels == 1 && oracle.channels == 1,
          "mask_iou: masks differ in shape");
  std::size_t inter_s = 0, union_s = 0, inter_t = 0, union_t = 0, oracle_t = 0, pred_s = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool ps = pred.data[i] >= 0.5;
    const bool os = oracle.data[i] >= 0.5;
    inter_s += ps && os;
    union_s += ps || os;
    inter_t += !ps && !os;
    union_t += !ps || !os;
    oracle_t += !os;
    pred_s += ps;
  }
  MaskIou out;
  out.iou_static = union_s ? static_cast<double>(inter_s) / union_s : 1.0;
  if (oracle_t == 0) {
    out.transient_defined = false;
    out.iou_transient = static_cast<double>(pred_s) / pred.data.size() > 0.99 ? 1.0 : 0.0;
  } else {
    out.iou_transient = static_cast<double>(inter_t) / union_t;
  }
  return out;
}

double static_fraction(const Image& pred) {
  std::size_t n = 0;
  for (double v : pred.data) n += v >= 0.5;
  return pred.data.empty() ? 0.0 : static_cast<double>(n) / pred.data.size();
}

void EvalReport::finalize() {
  mean_psnr = mean_ssim = 0;
  double iou_sum = 0, sf_sum = 0;
  int iou_n = 0, sf_n = 0;
  for (const auto& r : rows) {
    mean_psnr += r.psnr;
    mean_ssim += r.ssim;
    if (r.iou_transient) {
      iou_sum += *r.iou_transient;
      ++iou_n;
    }
    if (r.static_fraction) {
      sf_sum += *r.static_fraction;
      ++sf_n;
    }
  }
  if (!rows.empty()) {
    mean_psnr /= rows.size();
    mean_ssim /= rows.size();
  }
  mean_iou_transient = iou_n ? std::optional<double>(iou_sum / iou_n) : std::nullopt;
  mean_static_fraction = sf_n ? std::optional<double>(sf_sum / sf_n) : std::nullopt;
}

void write_metrics_csv_header(std::ostream& os) {
  os << "iter,view_id,psnr,ssim,iou_static,iou_transient,gaussian_count\n";
}

void write_metrics_csv_rows(std::ostream& os, const std::vector<ViewMetrics>& rows) {
  char buf[256];
  for (const auto& r : rows) {
    auto opt = [](const std::optional<double>& v) -> std::string {
      if (!v) return "";
      char b[32];
      std::snprintf(b, sizeof b, "%.6f", *v);
      return b;
    };
    std::snprintf(buf, sizeof buf, "%ld,%d,%.6f,%.6f,", r.iter, r.view_id, psnr_for_csv(r.psnr), r.ssim);
    os << buf << opt(r.iou_static) << ',' << opt(r.iou_transient) << ',' << r.gaussian_count << '\n';
  }
}

}  // namespace rsplat

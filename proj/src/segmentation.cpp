#include "cellgan/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "cellgan/linalg.hpp"

namespace cellgan::seg {

// ---- Ruderman lab <-> RGB ---------------------------------------------------

namespace {

constexpr double kRgb2Lms[9] = {0.3811, 0.5783, 0.0402, 0.1967, 0.7244,
                                0.0782, 0.0241, 0.1288, 0.8444};
constexpr double kLms2Rgb[9] = {4.4679, -3.5873, 0.1193, -1.2186, 2.3809,
                                -0.1624, 0.0497, -0.2439, 1.2045};
constexpr double kLmsFloor = 1e-6;
const double kInvSqrt3 = 1.0 / std::sqrt(3.0);
const double kInvSqrt6 = 1.0 / std::sqrt(6.0);
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

}  // namespace

LabImage rgb_to_lab(const img::RgbImage& image) {
  LabImage lab;
  lab.width = image.width;
  lab.height = image.height;
  lab.ch.resize(image.pixel_count() * 3);
  for (size_t i = 0; i < image.pixel_count(); ++i) {
    const double r = image.px[i * 3 + 0];
    const double g = image.px[i * 3 + 1];
    const double b = image.px[i * 3 + 2];
    double lms[3];
    for (int k = 0; k < 3; ++k)
      lms[k] = std::max(kLmsFloor,
                        kRgb2Lms[k * 3 + 0] * r + kRgb2Lms[k * 3 + 1] * g + kRgb2Lms[k * 3 + 2] * b);
    const double lL = std::log(lms[0]), lM = std::log(lms[1]), lS = std::log(lms[2]);
    lab.ch[i * 3 + 0] = (lL + lM + lS) * kInvSqrt3;
    lab.ch[i * 3 + 1] = (lL + lM - 2.0 * lS) * kInvSqrt6;
    lab.ch[i * 3 + 2] = (lL - lM) * kInvSqrt2;
  }
  return lab;
}

img::RgbImage lab_to_rgb(const LabImage& lab) {
  img::RgbImage out;
  out.width = lab.width;
  out.height = lab.height;
  out.px.resize((size_t)lab.width * lab.height * 3);
  for (size_t i = 0; i < (size_t)lab.width * lab.height; ++i) {
    const double l = lab.ch[i * 3 + 0];
    const double a = lab.ch[i * 3 + 1];
    const double b = lab.ch[i * 3 + 2];
    const double lL = l * kInvSqrt3 + a * kInvSqrt6 + b * kInvSqrt2;
    const double lM = l * kInvSqrt3 + a * kInvSqrt6 - b * kInvSqrt2;
    const double lS = l * kInvSqrt3 - 2.0 * a * kInvSqrt6;
    const double lms[3] = {std::exp(lL), std::exp(lM), std::exp(lS)};
    for (int k = 0; k < 3; ++k) {
      const double v = kLms2Rgb[k * 3 + 0] * lms[0] + kLms2Rgb[k * 3 + 1] * lms[1] +
                       kLms2Rgb[k * 3 + 2] * lms[2];
      out.px[i * 3 + k] = (uint8_t)std::lround(std::min(255.0, std::max(0.0, v)));
    }
  }
  return out;
}

void lab_stats(const LabImage& lab, std::array<double, 3>& mean, std::array<double, 3>& stddev) {
  const size_t n = (size_t)lab.width * lab.height;
  mean = {0, 0, 0};
  stddev = {0, 0, 0};
  if (!n) return;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) mean[(size_t)c] += lab.ch[i * 3 + c];
  for (int c = 0; c < 3; ++c) mean[(size_t)c] /= (double)n;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      const double d = lab.ch[i * 3 + c] - mean[(size_t)c];
      stddev[(size_t)c] += d * d;
    }
  for (int c = 0; c < 3; ++c) stddev[(size_t)c] = std::sqrt(stddev[(size_t)c] / (double)n);
}

LabImage reinhard_normalize_lab(const img::RgbImage& image, const ReinhardTargets& targets) {
  for (double s : targets.stddev)
    if (s <= 0) throw ConfigError("reinhard: target std must be strictly positive");
  LabImage lab = rgb_to_lab(image);
  std::array<double, 3> mu, sigma;
  lab_stats(lab, mu, sigma);
  const size_t n = (size_t)lab.width * lab.height;
  for (int c = 0; c < 3; ++c) {
    const double m = mu[(size_t)c];
    const double s = sigma[(size_t)c];
    if (s < 1e-12) {
      // degenerate channel: shift onto the target mean
      for (size_t i = 0; i < n; ++i) lab.ch[i * 3 + c] += targets.mean[(size_t)c] - m;
    } else {
      const double scale = targets.stddev[(size_t)c] / s;
      for (size_t i = 0; i < n; ++i)
        lab.ch[i * 3 + c] = (lab.ch[i * 3 + c] - m) * scale + targets.mean[(size_t)c];
    }
  }
  return lab;
}

img::RgbImage reinhard_normalize(const img::RgbImage& image, const ReinhardTargets& targets) {
  return lab_to_rgb(reinhard_normalize_lab(image, targets));
}

// ---- optical density and stains ---------------------------------------------

OdImage od_transform(const img::RgbImage& image) {
  OdImage od;
  od.width = image.width;
  od.height = image.height;
  od.od.resize(image.pixel_count() * 3);
  // lookup: 256 possible byte values
  double lut[256];
  for (int p = 0; p < 256; ++p) lut[p] = -std::log((p + 1.0) / 256.0);
  for (size_t i = 0; i < image.px.size(); ++i) od.od[i] = lut[image.px[i]];
  return od;
}

StainMatrix macenko_stain_vectors(const OdImage& od, const MacenkoParams& params) {
  if (params.angle_lo_pct < 0 || params.angle_hi_pct > 100 ||
      params.angle_lo_pct >= params.angle_hi_pct)
    throw ConfigError("macenko: invalid angle percentiles");

  const size_t n = (size_t)od.width * od.height;
  std::vector<std::array<double, 3>> pts;
  pts.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const double x = od.od[i * 3 + 0], y = od.od[i * 3 + 1], z = od.od[i * 3 + 2];
    if (std::sqrt(x * x + y * y + z * z) >= params.min_od_magnitude) pts.push_back({x, y, z});
  }
  if (pts.size() < 2)
    throw DataError("macenko: fewer than 2 pixels above the OD magnitude threshold");

  // uncentered second-moment matrix: stain mixtures span a plane through 0
  std::vector<double> m(9, 0.0);
  for (const auto& p : pts)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[(size_t)i * 3 + j] += p[(size_t)i] * p[(size_t)j];
  for (auto& v : m) v /= (double)pts.size();

  std::vector<double> evals, evecs;
  linalg::jacobi_eigen_sym(3, m, evals, evecs);
  if (evals[0] <= 0 || evals[1] / evals[0] < 1e-6)
    throw DataError("macenko: no stain structure (rank-deficient OD cloud)");

  std::array<double, 3> e1{evecs[0], evecs[1], evecs[2]};
  std::array<double, 3> e2{evecs[3], evecs[4], evecs[5]};
  // deterministic orientation: e1 toward the data, e2 largest component positive
  double dot_sum = 0;
  for (const auto& p : pts) dot_sum += p[0] * e1[0] + p[1] * e1[1] + p[2] * e1[2];
  if (dot_sum < 0)
    for (auto& v : e1) v = -v;
  int big = 0;
  for (int i = 1; i < 3; ++i)
    if (std::fabs(e2[(size_t)i]) > std::fabs(e2[(size_t)big])) big = i;
  if (e2[(size_t)big] < 0)
    for (auto& v : e2) v = -v;

  std::vector<double> angles;
  angles.reserve(pts.size());
  for (const auto& p : pts) {
    const double u = p[0] * e1[0] + p[1] * e1[1] + p[2] * e1[2];
    const double v = p[0] * e2[0] + p[1] * e2[1] + p[2] * e2[2];
    angles.push_back(std::atan2(v, u));
  }
  std::sort(angles.begin(), angles.end());
  auto pick = [&](double pct) {
    const double idx = pct / 100.0 * (double)(angles.size() - 1);
    return angles[(size_t)std::lround(idx)];
  };
  const double phi_lo = pick(params.angle_lo_pct);
  const double phi_hi = pick(params.angle_hi_pct);

  auto direction = [&](double phi) {
    std::array<double, 3> v;
    for (int i = 0; i < 3; ++i)
      v[(size_t)i] = std::cos(phi) * e1[(size_t)i] + std::sin(phi) * e2[(size_t)i];
    // stain vectors are non-negative OD directions; clamp and renormalize
    double norm = 0;
    for (auto& x : v) {
      if (x < 0) x = 0;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw DataError("macenko: degenerate stain direction");
    for (auto& x : v) x /= norm;
    return v;
  };

  std::array<double, 3> a = direction(phi_lo);
  std::array<double, 3> b = direction(phi_hi);
  // hematoxylin is the column with the larger blue-channel OD component
  StainMatrix sm;
  if (a[2] >= b[2]) {
    sm.hematoxylin = a;
    sm.eosin = b;
  } else {
    sm.hematoxylin = b;
    sm.eosin = a;
  }
  return sm;
}

Deconvolution color_deconvolve(const OdImage& od, const StainMatrix& stains) {
  const auto& h = stains.hematoxylin;
  const auto& e = stains.eosin;
  // 2x2 normal equations
  const double hh = h[0] * h[0] + h[1] * h[1] + h[2] * h[2];
  const double he = h[0] * e[0] + h[1] * e[1] + h[2] * e[2];
  const double ee = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
  const double det = hh * ee - he * he;
  // singular values of M^T M give cond(M)^2
  const double tr = hh + ee;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  const double smax = tr / 2.0 + disc, smin = tr / 2.0 - disc;
  if (smin <= 0 || std::sqrt(smax / smin) > 1e6)
    throw DataError("deconvolve: stain matrix is ill-conditioned");

  Deconvolution out;
  out.width = od.width;
  out.height = od.height;
  const size_t n = (size_t)od.width * od.height;
  out.hema.resize(n);
  out.eosin.resize(n);
  out.hema_rgb.width = od.width;
  out.hema_rgb.height = od.height;
  out.hema_rgb.px.resize(n * 3);
  for (size_t i = 0; i < n; ++i) {
    const double* p = &od.od[i * 3];
    const double bh = h[0] * p[0] + h[1] * p[1] + h[2] * p[2];
    const double be = e[0] * p[0] + e[1] * p[1] + e[2] * p[2];
    double ch = (ee * bh - he * be) / det;
    double ce = (hh * be - he * bh) / det;
    if (ch < 0) ch = 0;
    if (ce < 0) ce = 0;
    out.hema[i] = ch;
    out.eosin[i] = ce;
    for (int k = 0; k < 3; ++k) {
      const double v = 256.0 * std::exp(-h[(size_t)k] * ch) - 1.0;
      out.hema_rgb.px[i * 3 + k] = (uint8_t)std::lround(std::min(255.0, std::max(0.0, v)));
    }
  }
  return out;
}

std::vector<uint8_t> intensity_threshold(const img::RgbImage& hema_rgb, int threshold) {
  if (threshold < 0 || threshold > 255)
    throw ConfigError("intensity_threshold: threshold must be in [0,255]");
  std::vector<uint8_t> mask(hema_rgb.pixel_count(), 0);
  for (size_t i = 0; i < hema_rgb.pixel_count(); ++i) {
    const double y = img::luma601(hema_rgb.px[i * 3], hema_rgb.px[i * 3 + 1], hema_rgb.px[i * 3 + 2]);
    mask[i] = y < (double)threshold ? 1 : 0;
  }
  return mask;
}

// ---- morphology ----------------------------------------------------------------

std::vector<uint8_t> binary_erode_square(const std::vector<uint8_t>& mask, int w, int h, int k) {
  if (k % 2 == 0 || k < 1) throw ConfigError("erode: kernel must be odd and >= 1");
  const int r = k / 2;
  // separable: horizontal run then vertical run, border counts as background
  std::vector<uint8_t> tmp((size_t)w * h, 0), out((size_t)w * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t v = 1;
      for (int d = -r; d <= r; ++d) {
        const int xx = x + d;
        if (xx < 0 || xx >= w || !mask[(size_t)y * w + xx]) {
          v = 0;
          break;
        }
      }
      tmp[(size_t)y * w + x] = v;
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 1;
      for (int d = -r; d <= r; ++d) {
        const int yy = y + d;
        if (yy < 0 || yy >= h || !tmp[(size_t)yy * w + x]) {
          v = 0;
          break;
        }
      }
      out[(size_t)y * w + x] = v;
    }
  return out;
}

std::vector<uint8_t> binary_dilate_square(const std::vector<uint8_t>& mask, int w, int h, int k) {
  if (k % 2 == 0 || k < 1) throw ConfigError("dilate: kernel must be odd and >= 1");
  const int r = k / 2;
  std::vector<uint8_t> tmp((size_t)w * h, 0), out((size_t)w * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int d = -r; d <= r; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < w && mask[(size_t)y * w + xx]) {
          v = 1;
          break;
        }
      }
      tmp[(size_t)y * w + x] = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int d = -r; d <= r; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < h && tmp[(size_t)yy * w + x]) {
          v = 1;
          break;
        }
      }
      out[(size_t)y * w + x] = v;
    }
  return out;
}

std::vector<uint8_t> binary_open_square(const std::vector<uint8_t>& mask, int w, int h, int k) {
  if (k <= 1) return mask;
  return binary_dilate_square(binary_erode_square(mask, w, h, k), w, h, k);
}

std::vector<uint8_t> binary_open_cross3(const std::vector<uint8_t>& mask, int w, int h) {
  auto idx = [&](int x, int y) { return (size_t)y * w + x; };
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h; };
  const int dx[5] = {0, 1, -1, 0, 0};
  const int dy[5] = {0, 0, 0, 1, -1};
  std::vector<uint8_t> er((size_t)w * h, 0), out((size_t)w * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 1;
      for (int d = 0; d < 5; ++d) {
        const int xx = x + dx[d], yy = y + dy[d];
        if (!inside(xx, yy) || !mask[idx(xx, yy)]) {
          v = 0;
          break;
        }
      }
      er[idx(x, y)] = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int d = 0; d < 5; ++d) {
        const int xx = x + dx[d], yy = y + dy[d];
        if (inside(xx, yy) && er[idx(xx, yy)]) {
          v = 1;
          break;
        }
      }
      out[idx(x, y)] = v;
    }
  return out;
}

LabelImage connected_components4(const std::vector<uint8_t>& mask, int w, int h) {
  LabelImage out;
  out.width = w;
  out.height = h;
  out.labels.assign((size_t)w * h, 0);
  int next = 0;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int start = y * w + x;
      if (!mask[(size_t)start] || out.labels[(size_t)start]) continue;
      ++next;
      out.labels[(size_t)start] = next;
      stack.push_back(start);
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w, cy = cur / w;
        const int nb[4][2] = {{cx + 1, cy}, {cx - 1, cy}, {cx, cy + 1}, {cx, cy - 1}};
        for (auto& [nx, ny] : nb) {
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int ni = ny * w + nx;
          if (mask[(size_t)ni] && !out.labels[(size_t)ni]) {
            out.labels[(size_t)ni] = next;
            stack.push_back(ni);
          }
        }
      }
    }
  }
  out.max_label = next;
  return out;
}

LabelImage postprocess(const std::vector<uint8_t>& mask, int width, int height,
                       const PostprocessParams& params) {
  if (params.opening_kernel < 1 || params.opening_kernel % 2 == 0)
    throw ConfigError("postprocess: opening kernel must be odd and >= 1");
  if ((int)mask.size() != width * height)
    throw ShapeError("postprocess: mask size does not match dimensions");

  std::vector<uint8_t> work = mask;
  if (params.protrusion_kernel >= 3) work = binary_open_cross3(work, width, height);
  work = binary_open_square(work, width, height, params.opening_kernel);

  LabelImage cc = connected_components4(work, width, height);

  // drop small components, relabel contiguously in first-pixel scan order
  std::vector<int64_t> area((size_t)cc.max_label + 1, 0);
  for (int l : cc.labels) ++area[(size_t)l];
  std::vector<int> remap((size_t)cc.max_label + 1, 0);
  int next = 0;
  for (size_t i = 0; i < cc.labels.size(); ++i) {
    const int l = cc.labels[i];
    if (!l || remap[(size_t)l] || area[(size_t)l] < params.min_area) continue;
    remap[(size_t)l] = ++next;
  }
  for (auto& l : cc.labels) l = (l && area[(size_t)l] >= params.min_area) ? remap[(size_t)l] : 0;
  cc.max_label = next;
  return cc;
}

std::vector<CellInstance> extract_cell_instances(const img::RgbImage& normalized,
                                                 const LabelImage& labels,
                                                 const std::string& source_id) {
  if (normalized.width != labels.width || normalized.height != labels.height)
    throw ShapeError("extract: label image size does not match the source image");

  struct Box {
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    int64_t area = 0;
    double cr = 0, cc = 0;
  };
  std::vector<Box> boxes((size_t)labels.max_label + 1);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      const int l = labels.at(x, y);
      if (!l) continue;
      Box& b = boxes[(size_t)l];
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
      ++b.area;
      b.cr += y;
      b.cc += x;
    }

  std::vector<CellInstance> out;
  out.reserve((size_t)labels.max_label);
  for (int l = 1; l <= labels.max_label; ++l) {
    const Box& b = boxes[(size_t)l];
    if (b.area == 0) continue;
    CellInstance ci;
    ci.source_id = source_id;
    ci.label = l;
    ci.bbox_x = b.x0;
    ci.bbox_y = b.y0;
    ci.bbox_w = b.x1 - b.x0 + 1;
    ci.bbox_h = b.y1 - b.y0 + 1;
    ci.mask_area = b.area;
    ci.centroid_row = b.cr / (double)b.area;
    ci.centroid_col = b.cc / (double)b.area;

    img::RgbImage crop;
    crop.width = ci.bbox_w;
    crop.height = ci.bbox_h;
    crop.px.resize((size_t)crop.width * crop.height * 3);
    for (int y = 0; y < crop.height; ++y)
      for (int x = 0; x < crop.width; ++x)
        for (int c = 0; c < 3; ++c)
          crop.at(x, y, c) = normalized.at(b.x0 + x, b.y0 + y, c);

    const int longer = std::max(crop.width, crop.height);
    if (longer > 32) {
      const int nw = std::max(1, (int)std::lround((double)crop.width * 32.0 / longer));
      const int nh = std::max(1, (int)std::lround((double)crop.height * 32.0 / longer));
      crop = img::resize_bilinear(crop, nw, nh);
    }

    ci.image = img::RgbImage::filled(32, 32, 255, 255, 255);
    const int ox = (32 - crop.width) / 2;
    const int oy = (32 - crop.height) / 2;
    for (int y = 0; y < crop.height; ++y)
      for (int x = 0; x < crop.width; ++x)
        for (int c = 0; c < 3; ++c) ci.image.at(ox + x, oy + y, c) = crop.at(x, y, c);
    out.push_back(std::move(ci));
  }
  return out;
}

SegmentationResult segment_image(const img::RgbImage& image, const SegmentationParams& params,
                                 const std::string& source_id) {
  SegmentationResult res;
  res.normalized = reinhard_normalize(image, params.reinhard);
  OdImage od = od_transform(res.normalized);
  res.stains = macenko_stain_vectors(od, params.macenko);
  Deconvolution dec = color_deconvolve(od, res.stains);
  res.hema_rgb = std::move(dec.hema_rgb);
  res.mask = intensity_threshold(res.hema_rgb, params.threshold);
  res.labels = postprocess(res.mask, image.width, image.height, params.post);
  res.instances = extract_cell_instances(res.normalized, res.labels, source_id);
  return res;
}

}  // namespace cellgan::seg

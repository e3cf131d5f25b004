#pragma once

#include <array>
#include <string>
#include <vector>

#include "cellgan/image.hpp"

namespace cellgan::seg {

// Per-pixel instance labels; 0 is background, labels are contiguous 1..n.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<int> labels;
  int max_label = 0;

  int at(int x, int y) const { return labels[(size_t)y * width + x]; }
};

struct CellInstance {
  img::RgbImage image;  // exactly 32x32
  std::string source_id;
  int label = 0;  // instance id within the source image
  int bbox_x = 0, bbox_y = 0, bbox_w = 0, bbox_h = 0;
  int64_t mask_area = 0;
  double centroid_row = 0, centroid_col = 0;
  int class_label = -1;   // ground-truth class when known (synthetic cohorts)
  int rotation_deg = 0;   // augmentation provenance
};

// Reinhard color transfer in the Ruderman lab space (natural-log LMS over
// 0..255 RGB). The default targets are the reference stats used throughout.
struct ReinhardTargets {
  std::array<double, 3> mean{8.98, 0.08, 0.02};
  std::array<double, 3> stddev{0.64, 0.11, 0.03};
};

struct LabImage {
  int width = 0;
  int height = 0;
  std::vector<double> ch;  // interleaved l, alpha, beta
};

LabImage rgb_to_lab(const img::RgbImage& image);
img::RgbImage lab_to_rgb(const LabImage& lab);
void lab_stats(const LabImage& lab, std::array<double, 3>& mean, std::array<double, 3>& stddev);

// Channel-wise (x - mu_src)/sigma_src * sigma_tgt + mu_tgt in lab space; a
// degenerate source channel (sigma = 0) is shifted only.
LabImage reinhard_normalize_lab(const img::RgbImage& image, const ReinhardTargets& targets);
img::RgbImage reinhard_normalize(const img::RgbImage& image, const ReinhardTargets& targets);

// Optical density: od = -ln((p+1)/256) per channel.
struct OdImage {
  int width = 0;
  int height = 0;
  std::vector<double> od;  // interleaved r, g, b optical densities
};

OdImage od_transform(const img::RgbImage& image);

struct StainMatrix {
  std::array<double, 3> hematoxylin{};  // unit OD direction
  std::array<double, 3> eosin{};
};

struct MacenkoParams {
  double angle_lo_pct = 1.0;
  double angle_hi_pct = 99.0;
  double min_od_magnitude = 16.0 / 255.0;
};

// PCA plane + angle-percentile stain estimation. Throws DataError("no stain
// structure...") on a rank-deficient OD cloud.
StainMatrix macenko_stain_vectors(const OdImage& od, const MacenkoParams& params);

struct Deconvolution {
  int width = 0;
  int height = 0;
  std::vector<double> hema;   // clamped non-negative concentrations
  std::vector<double> eosin;
  img::RgbImage hema_rgb;     // hematoxylin-only re-render for thresholding
};

Deconvolution color_deconvolve(const OdImage& od, const StainMatrix& stains);

// Foreground where the ITU-R 601 luma of the hematoxylin render is strictly
// below the threshold.
std::vector<uint8_t> intensity_threshold(const img::RgbImage& hema_rgb, int threshold);

struct PostprocessParams {
  int min_area = 200;
  int opening_kernel = 7;
  int protrusion_kernel = 3;  // cross-shaped pre-pass standing in for the cited protrusion removal
};

LabelImage postprocess(const std::vector<uint8_t>& mask, int width, int height,
                       const PostprocessParams& params);

std::vector<CellInstance> extract_cell_instances(const img::RgbImage& normalized,
                                                 const LabelImage& labels,
                                                 const std::string& source_id);

struct SegmentationParams {
  ReinhardTargets reinhard;
  MacenkoParams macenko;
  int threshold = 120;
  PostprocessParams post;
};

struct SegmentationResult {
  img::RgbImage normalized;
  StainMatrix stains;
  img::RgbImage hema_rgb;
  std::vector<uint8_t> mask;
  LabelImage labels;
  std::vector<CellInstance> instances;
};

SegmentationResult segment_image(const img::RgbImage& image, const SegmentationParams& params,
                                 const std::string& source_id);

// Morphology helpers (square kernel must be odd; exposed for tests).
std::vector<uint8_t> binary_erode_square(const std::vector<uint8_t>& mask, int w, int h, int k);
std::vector<uint8_t> binary_dilate_square(const std::vector<uint8_t>& mask, int w, int h, int k);
std::vector<uint8_t> binary_open_square(const std::vector<uint8_t>& mask, int w, int h, int k);
std::vector<uint8_t> binary_open_cross3(const std::vector<uint8_t>& mask, int w, int h);
LabelImage connected_components4(const std::vector<uint8_t>& mask, int w, int h);

}  // namespace cellgan::seg

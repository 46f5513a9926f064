#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ding {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Inpainting problem: observe y = x_star[observed] with noise level sigma_y.
// `masked` and `observed` are sorted, disjoint and cover {0..d-1}.
struct InpaintingTask {
  int d = 0;
  std::vector<int> masked;
  std::vector<int> observed;
  Vec y;
  double sigma_y = 0.01;
  std::optional<Vec> x_star;

  bool fully_masked() const { return observed.empty(); }

  Vec gather_observed(const Vec& x) const;
  void scatter_observed(Vec& x, const Vec& values) const;
};

// Binary grid, row-major; 1 = observed, 0 = masked.
struct MaskGrid {
  MaskGrid() = default;
  MaskGrid(int w, int h, std::vector<std::uint8_t> bits)
      : width(w), height(h), observed(std::move(bits)) {}

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> observed;

  std::uint8_t at(int row, int col) const {
    return observed[static_cast<std::size_t>(row) * width + col];
  }
};

using PixelMask = MaskGrid;

enum class DownsampleMode { AvgPool, Bilinear };

// Reduces a pixel-space mask to the latent resolution. Each latent cell gets
// the observed-pixel fraction of its receptive field (box filter for avgpool,
// antialiased triangle filter for bilinear) and is marked observed iff the
// fraction >= threshold.
MaskGrid downsample_mask(const PixelMask& pm, int factor, DownsampleMode mode,
                         double threshold);

// y is extracted as the observed sub-vector of x_star. A fully-masked input
// is allowed and yields a pure-generation task.
InpaintingTask build_task(const Vec& x_star, const std::vector<int>& masked,
                          double sigma_y = 0.01);
InpaintingTask build_task(const Vec& x_star, const MaskGrid& latent_mask,
                          double sigma_y = 0.01);

// PSNR over the observed coordinates only, capped at 200 dB. peak <= 0 means
// "use the data range of x_star on the observed coordinates" (1 if that range
// is zero).
double cpsnr(const Vec& x_hat, const InpaintingTask& task, double peak = -1.0);

// PGM (P5/P2) mask IO; pixel value >= 128 means observed.
PixelMask read_pgm_mask(const std::string& path);
void write_pgm_mask(const std::string& path, const MaskGrid& mask);

// Grayscale dump of a vector reshaped to (height, width): values are mapped
// affinely from [lo, hi] to 0..255 and the (lo, hi) pair is written to
// `path + ".range.txt"`.
void write_pgm_image(const std::string& path, const Vec& values, int width,
                     int height);

// Line-oriented text serialization (keys: d, sigma_y, masked, y, x_star).
std::string serialize_task(const InpaintingTask& task);
InpaintingTask parse_task(const std::string& text);
void save_task(const std::string& path, const InpaintingTask& task);
InpaintingTask load_task(const std::string& path);

}  // namespace ding

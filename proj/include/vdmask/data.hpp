#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vdmask/common.hpp"

// Synthetic counting-patches dataset: g x g grid, n patches uniformly red,
// the rest drawn i.i.d. from six distractor colors. Ground-truth red sets
// are recorded at generation time.

namespace vdm {

using Color = std::array<std::uint8_t, 3>;

struct GridSpec {
  int grid_g = 3;
  int patch_px = 16;
  int channels = 3;
  Color red = {230, 25, 25};
  std::array<Color, 6> distractors = {{{60, 180, 75},
                                       {0, 130, 200},
                                       {255, 225, 25},
                                       {70, 240, 240},
                                       {240, 50, 230},
                                       {255, 255, 255}}};

  int image_size() const { return grid_g * patch_px; }
  int n_patches() const { return grid_g * grid_g; }
  int n_classes() const { return n_patches() + 1; }

  void validate() const;
};

struct LabeledImage {
  std::vector<std::uint8_t> pixels;  // H*W*3 row-major RGB
  int label = 0;                     // number of red patches
  std::vector<int> red_set;          // sorted patch indices
};

// Deterministic given (seed, count, spec); image i only depends on seed+i.
std::vector<LabeledImage> gen_counting_dataset(std::uint64_t seed, int count,
                                               const GridSpec& spec);

// Recomputes the red patch set from pixels (every pixel of the patch must
// equal the red palette entry exactly).
std::vector<int> recover_red_set(const LabeledImage& img, const GridSpec& spec);

// Fixed affine map to [-1, 1]: x -> (x/255 - 0.5)/0.5.
std::vector<float> normalize_image(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> denormalize_image(const std::vector<float>& values);

// Binary portable pixmaps, maxval 255.
struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 3 = P6, 1 = P5
  std::vector<std::uint8_t> pixels;
};

PnmImage load_pnm(const std::string& path);
void save_ppm(const std::string& path, int width, int height,
              const std::vector<std::uint8_t>& rgb);
void save_pgm(const std::string& path, int width, int height,
              const std::vector<std::uint8_t>& gray);

// [0,1] saliency to 8-bit gray with round-half-up.
std::vector<std::uint8_t> saliency_to_bytes(const std::vector<float>& saliency);

// Dataset directory layout: <dir>/<split>/img_#####.ppm plus one JSON-lines
// manifest <dir>/<split>.jsonl with {file, label, red_set} per image.
void write_split(const std::string& dir, const std::string& split,
                 const std::vector<LabeledImage>& images);
std::vector<LabeledImage> load_split(const std::string& dir,
                                     const std::string& split);

}  // namespace vdm

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eddi/partial_vae.hpp"

namespace eddi {

enum class MaskMode { none, random, top };

const char* to_string(MaskMode m);
MaskMode mask_mode_from_string(const std::string& s);

// Cells of `image` left observed under `mode`. Random: drop rate r ~ U(0, 0.7),
// each pixel dropped with probability r. Top: the first floor(0.6 * D) pixels
// in row-major order are hidden.
ObservationSet masked_observation(const Vector& image, MaskMode mode, Rng& rng);

// Reduced image preset: H=20, decoder 20-200-D, ZI/ZI-m encoder D-200-40,
// PN/PNP with M=20, K=50 and a K-200-40 inference network.
ModelConfig desk_image_config(EncoderVariant v);

// Schema for a flattened width x height binary image ("p0", "p1", ...); the
// last pixel is flagged as the (unused) target so the schema validates.
VariableSchema image_schema(Index width, Index height);

// One image per line, width*height bits in row-major order as hex digits
// (most significant bit first). Returns rows x pixels in {0, 1}.
Matrix load_bitmaps(const std::filesystem::path& path, Index pixels);

struct InpaintImage {
  Index index = 0;
  Index observed = 0;
  double elbo = 0.0;  // per-image sum over observed pixels
  Vector reconstruction;
};

struct InpaintReport {
  MaskMode mode = MaskMode::none;
  std::vector<InpaintImage> images;
  double mean_elbo = 0.0;
  double stderr_elbo = 0.0;
};

// Test ELBO per image: average over `elbo_samples` single-sample bounds.
// Image i draws its mask from derive_seed(seed, {i, 1}) and its noise from
// derive_seed(seed, {i, 2}).
InpaintReport inpaint_eval(const PartialVae& model, const Matrix& images, MaskMode mode, std::uint64_t seed,
                           Index elbo_samples = 1);

std::string inpaint_csv(const InpaintReport& report);

// Binary PGM (P5) with values in [0, 1] mapped onto 0..255.
void write_pgm(const std::filesystem::path& path, const Vector& pixels, Index width, Index height);

}  // namespace eddi

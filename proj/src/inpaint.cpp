#include "eddi/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eddi/error.hpp"
#include "eddi/format.hpp"

namespace eddi {

const char* to_string(MaskMode m) {
  switch (m) {
    case MaskMode::none: return "none";
    case MaskMode::random: return "random";
    case MaskMode::top: return "top";
  }
  return "?";
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "none") return MaskMode::none;
  if (s == "random") return MaskMode::random;
  if (s == "top") return MaskMode::top;
  fail(ErrorKind::config, "unknown masking mode '" + s + "'", "mask");
}

ObservationSet masked_observation(const Vector& image, MaskMode mode, Rng& rng) {
  const Index d = image.size();
  ObservationSet obs(d);
  Index hidden = 0;
  double rate = 0.0;
  if (mode == MaskMode::top) hidden = static_cast<Index>(std::floor(0.6 * static_cast<double>(d)));
  if (mode == MaskMode::random) rate = rng.uniform(0.0, 0.7);
  for (Index i = 0; i < d; ++i) {
    if (mode == MaskMode::random && rng.uniform() < rate) continue;
    if (i < hidden || std::isnan(image[i])) continue;
    obs.insert(i, image[i]);
  }
  return obs;
}

Matrix load_bitmaps(const std::filesystem::path& path, Index pixels) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::data, "cannot open image file " + path.string(), "data");
  const Index digits = (pixels + 3) / 4;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (static_cast<Index>(line.size()) != digits) {
      fail(ErrorKind::data, "line " + std::to_string(lines.size() + 1) + ": expected " + std::to_string(digits) +
                                " hex digits, found " + std::to_string(line.size()),
           "data");
    }
    lines.push_back(line);
  }
  if (lines.empty()) fail(ErrorKind::data, "image file is empty", "data");
  const Index pad = digits * 4 - pixels;
  Matrix out(static_cast<Index>(lines.size()), pixels);
  for (std::size_t r = 0; r < lines.size(); ++r) {
    for (Index k = 0; k < digits; ++k) {
      const char c = lines[r][static_cast<std::size_t>(k)];
      int v = 0;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
      else fail(ErrorKind::data, "line " + std::to_string(r + 1) + ": invalid hex digit", "data");
      for (int b = 0; b < 4; ++b) {
        const Index bit = k * 4 + b - pad;
        if (bit >= 0) out(static_cast<Index>(r), bit) = (v >> (3 - b)) & 1;
      }
    }
  }
  return out;
}

ModelConfig desk_image_config(EncoderVariant v) {
  ModelConfig c;
  c.encoder = default_encoder_config(v, 20);
  c.encoder.embedding_dim = 20;
  c.encoder.feature_dim = 50;
  c.encoder.inference_hidden = {200};
  c.decoder_hidden = {200};
  return c;
}

VariableSchema image_schema(Index width, Index height) {
  VariableSchema s;
  for (Index k = 0; k < width * height; ++k) {
    Variable v;
    v.name = "p" + std::to_string(k);
    v.kind = VariableKind::binary;
    s.variables.push_back(v);
  }
  s.variables.back().target = true;
  return s;
}

InpaintReport inpaint_eval(const PartialVae& model, const Matrix& images, MaskMode mode, std::uint64_t seed,
                           Index elbo_samples) {
  if (images.cols() != model.num_variables()) {
    fail(ErrorKind::shape, "images have " + std::to_string(images.cols()) + " pixels, the model expects " +
                               std::to_string(model.num_variables()),
         "images");
  }
  if (elbo_samples < 1) fail(ErrorKind::argument, "at least one ELBO sample is required", "samples");
  InpaintReport report;
  report.mode = mode;
  const Index h = model.latent_dim();
  std::vector<double> values;
  for (Index i = 0; i < images.rows(); ++i) {
    Rng mask_rng(derive_seed(seed, {static_cast<std::uint64_t>(i), 1}));
    Rng noise_rng(derive_seed(seed, {static_cast<std::uint64_t>(i), 2}));
    const Vector image = images.row(i).transpose();
    const ObservationSet obs = masked_observation(image, mode, mask_rng);
    std::vector<ObservationSet> sets(static_cast<std::size_t>(elbo_samples), obs);
    Matrix noise(elbo_samples, h);
    for (Index s = 0; s < elbo_samples; ++s)
      for (Index j = 0; j < h; ++j) noise(s, j) = noise_rng.normal();
    const Vector bounds = partial_elbo_batch(model, sets, noise);

    InpaintImage img;
    img.index = i;
    img.observed = static_cast<Index>(obs.size());
    img.elbo = bounds.mean();
    const DiagonalGaussian q = encode(model.config.encoder, model.encoder, obs);
    img.reconstruction = decode(model, q.mean.transpose()).mean.row(0).transpose();
    values.push_back(img.elbo);
    report.images.push_back(std::move(img));
  }
  if (!values.empty()) {
    double sum = 0.0;
    for (double v : values) sum += v;
    report.mean_elbo = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - report.mean_elbo) * (v - report.mean_elbo);
      report.stderr_elbo = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
    }
  }
  return report;
}

std::string inpaint_csv(const InpaintReport& report) {
  std::ostringstream out;
  out << "image,mode,observed,elbo\n";
  for (const auto& img : report.images) {
    out << img.index << ',' << to_string(report.mode) << ',' << img.observed << ',' << format_double(img.elbo) << '\n';
  }
  return out.str();
}

void write_pgm(const std::filesystem::path& path, const Vector& pixels, Index width, Index height) {
  if (pixels.size() != width * height) fail(ErrorKind::shape, "pixel count does not match the image size", "pixels");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::data, "cannot write " + path.string(), "out");
  f << "P5\n" << width << ' ' << height << "\n255\n";
  for (Index k = 0; k < pixels.size(); ++k) {
    const double v = std::clamp(pixels[k], 0.0, 1.0);
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

}  // namespace eddi

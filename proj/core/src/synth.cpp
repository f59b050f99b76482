#include "amfusion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "amfusion/error.hpp"
#include "amfusion/image_io.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  const int size = 2 * radius + 1;
  NoGradGuard no_grad;
  const Var rows = ops::filter2d(Var::constant(image), Tensor(Shape{1, 1, 1, size}, k), ops::Padding::Reflect);
  return ops::filter2d(rows, Tensor(Shape{1, 1, size, 1}, k), ops::Padding::Reflect).value();
}

}  // namespace

Scene Scene::from_image(Tensor rgb) {
  Scene s;
  s.labels.assign(rgb.shape().plane(), 0);
  s.rgb = std::move(rgb);
  return s;
}

Scene generate_scene(int height, int width, std::uint64_t seed) {
  auto rng = stream_rng(seed, 0);
  Scene scene;
  scene.rgb = Tensor(Shape{1, 3, height, width});
  scene.labels.assign(static_cast<std::size_t>(height) * width, 0);

  // Background: vertical two-colour gradient with a low-frequency ripple.
  double top[3];
  double bottom[3];
  for (int c = 0; c < 3; ++c) {
    top[c] = uniform(rng, 0.25, 0.6);
    bottom[c] = uniform(rng, 0.3, 0.75);
  }
  const double fy = uniform(rng, 1.0, 3.0);
  const double fx = uniform(rng, 1.0, 3.0);
  const double phase = uniform(rng, 0.0, 6.283);
  for (int y = 0; y < height; ++y) {
    const double t = static_cast<double>(y) / std::max(1, height - 1);
    for (int x = 0; x < width; ++x) {
      const double ripple = 0.06 * std::sin(6.283 * (fy * y / height + fx * x / width) + phase);
      for (int c = 0; c < 3; ++c) scene.rgb.at(0, c, y, x) = (1 - t) * top[c] + t * bottom[c] + ripple;
    }
  }

  // Objects: rectangles and ellipses, some striped.
  const int objects = std::uniform_int_distribution<int>(3, 6)(rng);
  for (int k = 1; k <= objects; ++k) {
    const double cy = uniform(rng, 0.1, 0.9) * height;
    const double cx = uniform(rng, 0.1, 0.9) * width;
    const double ry = uniform(rng, 0.06, 0.2) * height;
    const double rx = uniform(rng, 0.06, 0.2) * width;
    const bool ellipse = uniform(rng, 0.0, 1.0) < 0.5;
    const bool striped = uniform(rng, 0.0, 1.0) < 0.4;
    const double period = uniform(rng, 3.0, 7.0);
    double colour[3];
    for (double& v : colour) v = uniform(rng, 0.1, 0.9);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (!inside) continue;
        const double stripe = striped && std::fmod(x + y, 2 * period) < period ? 0.15 : 0.0;
        for (int c = 0; c < 3; ++c) scene.rgb.at(0, c, y, x) = colour[c] - stripe;
        scene.labels[static_cast<std::size_t>(y) * width + x] = k;
      }
    }
  }
  for (double& v : scene.rgb.values()) v = std::clamp(v, 0.0, 1.0);
  scene.objects = objects;
  return scene;
}

void DegradationParams::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (!(lowlight_scale > 0.0 && lowlight_scale <= 1.0)) fail("lowlight_scale must lie in (0,1]");
  if (num_glare < 0) fail("num_glare must be >= 0");
  if (!(glare_sigma > 0.0)) fail("glare_sigma must be > 0");
  if (!(glare_peak > 0.0 && glare_peak <= 1.0)) fail("glare_peak must lie in (0,1]");
  if (!(illumination_floor >= 0.0 && illumination_floor <= 1.0)) fail("illumination_floor must lie in [0,1]");
}

Tensor infrared_proxy(const Scene& scene, std::uint64_t seed) {
  const Tensor y = to_luminance(scene.rgb);
  const Shape s = y.shape();
  const int regions = scene.objects + 1;
  std::vector<double> sum(regions, 0.0);
  std::vector<double> count(regions, 0.0);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    sum[scene.labels[i]] += y[i];
    count[scene.labels[i]] += 1.0;
  }
  // Each region keeps its mean and gets its own seeded contrast gain.
  auto rng = stream_rng(seed, 3);
  std::vector<double> gain(regions);
  for (int k = 0; k < regions; ++k) {
    sum[k] = count[k] > 0 ? sum[k] / count[k] : 0.0;
    gain[k] = uniform(rng, 1.2, 1.8);
  }
  Tensor ir(s);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    const int k = scene.labels[i];
    ir[i] = std::clamp(sum[k] + gain[k] * (y[i] - sum[k]), 0.0, 1.0);
  }
  return ir;
}

SyntheticSample synthesize_pair(const Scene& scene, const DegradationParams& params) {
  params.validate();
  const Shape s = scene.rgb.shape();
  const int h = s.h;
  const int w = s.w;

  // L: smooth random field mapped to [floor, 1], then scaled.
  auto rng_l = stream_rng(params.seed, 1);
  Tensor noise(Shape{1, 1, h, w});
  for (double& v : noise.values()) v = uniform(rng_l, 0.0, 1.0);
  const Tensor field = gaussian_blur(noise, std::max(1.0, h / 8.0));
  const double lo = field.min();
  const double hi = field.max();
  Tensor illumination(Shape{1, 1, h, w});
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double f = hi > lo ? (field[i] - lo) / (hi - lo) : 1.0;
    illumination[i] = params.lowlight_scale * (params.illumination_floor + (1.0 - params.illumination_floor) * f);
  }

  // S: isotropic Gaussian glare blobs.
  auto rng_s = stream_rng(params.seed, 2);
  Tensor glare(Shape{1, 1, h, w});
  std::vector<GlareBlob> blobs;
  for (int b = 0; b < params.num_glare; ++b) {
    const GlareBlob blob{uniform(rng_s, 0.2, 0.8) * (h - 1), uniform(rng_s, 0.2, 0.8) * (w - 1)};
    blobs.push_back(blob);
    const double denom = 2.0 * params.glare_sigma * params.glare_sigma;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double r2 = (y - blob.y) * (y - blob.y) + (x - blob.x) * (x - blob.x);
        glare.at(0, 0, y, x) += params.glare_peak * std::exp(-r2 / denom);
      }
    }
  }

  Tensor degraded(s);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      degraded.plane(0, c)[i] = std::clamp(scene.rgb.plane(0, c)[i] * illumination[i] + glare[i], 0.0, 1.0);
    }
  }

  SyntheticSample out;
  out.pair = ImagePair{std::move(degraded), infrared_proxy(scene, params.seed), {}};
  out.ground_truth = scene.rgb;
  out.illumination = std::move(illumination);
  out.glare = std::move(glare);
  out.blobs = std::move(blobs);
  return out;
}

DegradationParams sample_degradation(int size, std::uint64_t seed) {
  auto rng = stream_rng(seed, 4);
  DegradationParams p;
  p.lowlight_scale = uniform(rng, 0.3, 0.7);
  p.num_glare = std::uniform_int_distribution<int>(1, 2)(rng);
  p.glare_sigma = uniform(rng, 0.06, 0.12) * size;
  p.glare_peak = uniform(rng, 0.8, 1.0);
  p.seed = seed;
  return p;
}

namespace {

std::string format_entry(const ManifestEntry& e) {
  std::ostringstream out;
  out << std::setprecision(17) << e.id << ' ' << e.params.lowlight_scale << ' ' << e.params.num_glare << ' '
      << e.params.glare_sigma << ' ' << e.params.glare_peak << ' ' << e.params.seed;
  return out.str();
}

}  // namespace

std::vector<ManifestEntry> write_synthetic_dataset(const std::filesystem::path& dir, int count, int size,
                                                   std::uint64_t seed) {
  if (count <= 0) throw Error(ErrorKind::InvalidConfig, "dataset size must be positive");
  if (size <= 0 || size % kSpatialMultiple != 0) {
    throw Error(ErrorKind::DimensionNotDivisible, "image size " + std::to_string(size) + " not a multiple of 16");
  }
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  std::ofstream manifest(dir / "manifest.txt");
  manifest << "# id lowlight_scale num_glare glare_sigma glare_peak seed\n";
  for (int i = 0; i < count; ++i) {
    std::ostringstream id;
    id << "scene" << std::setw(4) << std::setfill('0') << i;
    const std::uint64_t scene_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    ManifestEntry entry{id.str(), sample_degradation(size, scene_seed)};
    const Scene scene = generate_scene(size, size, scene_seed);
    const SyntheticSample sample = synthesize_pair(scene, entry.params);
    write_png(dir / (entry.id + "_vis.png"), sample.pair.visible);
    write_png(dir / (entry.id + "_ir.png"), sample.pair.infrared);
    write_png(dir / (entry.id + "_gt.png"), sample.ground_truth);
    manifest << format_entry(entry) << '\n';
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    ManifestEntry e;
    row >> e.id;
    if (e.id.empty()) continue;
    row >> e.params.lowlight_scale >> e.params.num_glare >> e.params.glare_sigma >> e.params.glare_peak >>
        e.params.seed;
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace amfusion

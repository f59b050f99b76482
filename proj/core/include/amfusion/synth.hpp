#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amfusion/datamodel.hpp"

namespace amfusion {

/// Clean procedural scene: 1x3xHxW colours in [0,1] plus an object label per
/// pixel (0 = background).
struct Scene {
  Tensor rgb;
  std::vector<int> labels;
  int objects = 0;

  /// Wraps an arbitrary clean image as a single-region scene.
  static Scene from_image(Tensor rgb);
};

Scene generate_scene(int height, int width, std::uint64_t seed);

/// Parameters of D = clamp(O * L + S).
struct DegradationParams {
  double lowlight_scale = 0.5;  // in (0,1]
  int num_glare = 1;
  double glare_sigma = 6.0;  // pixels
  double glare_peak = 1.0;   // in (0,1]
  std::uint64_t seed = 0;
  /// Lower end of the smooth illumination field before scaling; 1 makes L flat.
  double illumination_floor = 0.2;

  void validate() const;
};

struct GlareBlob {
  double y = 0.0;
  double x = 0.0;
};

struct SyntheticSample {
  ImagePair pair;            // degraded visible D and infrared proxy
  Tensor ground_truth;       // clean O, 1x3xHxW
  Tensor illumination;       // L, 1x1xHxW
  Tensor glare;              // S, 1x1xHxW
  std::vector<GlareBlob> blobs;
};

/// Degrades `scene` and derives its infrared proxy. The proxy depends only on
/// the clean scene and the seed, never on L or S.
SyntheticSample synthesize_pair(const Scene& scene, const DegradationParams& params);

/// Infrared proxy: luminance of the clean scene with a seeded contrast gain
/// per object, stretched about the object's own mean.
Tensor infrared_proxy(const Scene& scene, std::uint64_t seed);

/// Random night-scene degradation for dataset generation.
DegradationParams sample_degradation(int size, std::uint64_t seed);

struct ManifestEntry {
  std::string id;
  DegradationParams params;
};

/// Writes {id}_vis.png, {id}_ir.png, {id}_gt.png for n scenes plus manifest.txt.
std::vector<ManifestEntry> write_synthetic_dataset(const std::filesystem::path& dir, int count, int size,
                                                   std::uint64_t seed);

/// Reads manifest.txt; throws FileNotFound when missing.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

}  // namespace amfusion

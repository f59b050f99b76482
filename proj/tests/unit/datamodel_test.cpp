#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "amfusion/datamodel.hpp"
#include "amfusion/error.hpp"
#include "amfusion/image_io.hpp"
#include "testing.hpp"

using namespace amfusion;
using amfusion::testing::random_tensor;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "amfusion_datamodel" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Values on the 8-bit grid so PNG round trips are exact.
Tensor grid_tensor(Shape s, std::mt19937_64& rng) {
  Tensor t(s);
  std::uniform_int_distribution<int> u(0, 255);
  for (double& v : t.values()) v = u(rng) / 255.0;
  return t;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::BadShape;
}

}  // namespace

TEST(Config, DefaultsValidate) {
  const FusionConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.channels(1), 16);
  EXPECT_EQ(c.channels(5), 256);
  EXPECT_DOUBLE_EQ(c.sigma, 0.2);
  EXPECT_DOUBLE_EQ(c.eta, 0.75);
  EXPECT_DOUBLE_EQ(c.alpha, 1.5);
  EXPECT_DOUBLE_EQ(c.beta, 2.0);
}

TEST(Config, ParseFormatRoundTrip) {
  FusionConfig c;
  c.base_channels = 8;
  c.sigma = 0.123456789012345;
  c.use_dsfm = false;
  c.detector = "null";
  c.seed = 42;
  const FusionConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.sigma, c.sigma);
  EXPECT_FALSE(back.use_dsfm);
}

TEST(Config, CommentsAndErrors) {
  const FusionConfig c = parse_config("# comment\n\nheads = 2  # trailing\nuse_srm = false\n");
  EXPECT_EQ(c.heads, 2);
  EXPECT_FALSE(c.use_srm);
  EXPECT_EQ(kind_of([] { parse_config("nonsense = 1\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { parse_config("sigma = abc\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { parse_config("sigma = 0\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { parse_config("exposure_level = 1\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { parse_config("heads = 3\n"); }), ErrorKind::HeadDivisibility);
  EXPECT_EQ(kind_of([] { load_config("/nonexistent/amfusion.cfg"); }), ErrorKind::FileNotFound);
}

TEST(ImageIo, PngRoundTripIsExact) {
  std::mt19937_64 rng(1);
  const auto dir = scratch("png");
  const Tensor rgb = grid_tensor({1, 3, 16, 32}, rng);
  const Tensor gray = grid_tensor({1, 1, 16, 32}, rng);
  write_png(dir / "rgb.png", rgb);
  write_png(dir / "gray.png", gray);
  EXPECT_EQ(read_png(dir / "rgb.png"), rgb);
  EXPECT_EQ(read_png(dir / "gray.png"), gray);
  EXPECT_EQ(kind_of([&] { read_png(dir / "missing.png"); }), ErrorKind::FileNotFound);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_EQ(kind_of([&] { read_png(dir / "junk.png"); }), ErrorKind::DecodeError);
}

TEST(ImagePair, LoadsAndValidates) {
  std::mt19937_64 rng(2);
  const auto dir = scratch("pair");
  const Tensor vis = grid_tensor({1, 3, 32, 48}, rng);
  const Tensor ir_rgb = grid_tensor({1, 3, 32, 48}, rng);
  write_png(dir / "v.png", vis);
  write_png(dir / "i.png", ir_rgb);
  const ImagePair p = load_image_pair(dir / "v.png", dir / "i.png");
  EXPECT_EQ(p.height(), 32);
  EXPECT_EQ(p.width(), 48);
  EXPECT_EQ(p.infrared.shape().c, 1);
  EXPECT_LT(max_abs_diff(p.infrared, to_luminance(ir_rgb)), 1e-15);
  EXPECT_GE(p.visible.min(), 0.0);
  EXPECT_LE(p.visible.max(), 1.0);

  // A gray visible image is replicated into three channels.
  write_png(dir / "g.png", grid_tensor({1, 1, 32, 48}, rng));
  const ImagePair g = load_image_pair(dir / "g.png", dir / "i.png");
  EXPECT_EQ(g.visible.slice_channels(0, 1), g.visible.slice_channels(2, 1));

  write_png(dir / "small.png", grid_tensor({1, 1, 16, 16}, rng));
  write_png(dir / "odd.png", grid_tensor({1, 3, 250, 250}, rng));
  write_png(dir / "odd_ir.png", grid_tensor({1, 1, 250, 250}, rng));
  EXPECT_EQ(kind_of([&] { load_image_pair(dir / "v.png", dir / "small.png"); }), ErrorKind::DimensionMismatch);
  EXPECT_EQ(kind_of([&] { load_image_pair(dir / "odd.png", dir / "odd_ir.png"); }),
            ErrorKind::DimensionNotDivisible);
  EXPECT_EQ(kind_of([&] { load_image_pair(dir / "nope.png", dir / "i.png"); }), ErrorKind::FileNotFound);
}

TEST(RandomCrop, DeterministicAndAligned) {
  std::mt19937_64 rng(3);
  ImagePair p{random_tensor({1, 3, 64, 64}, rng), random_tensor({1, 1, 64, 64}, rng), "x"};
  // Tie the infrared to the visible so alignment is checkable.
  p.infrared = p.visible.slice_channels(1, 1);
  const ImagePair a = random_crop(p, 32, 7);
  const ImagePair b = random_crop(p, 32, 7);
  EXPECT_EQ(a.visible, b.visible);
  EXPECT_EQ(a.infrared, b.infrared);
  EXPECT_EQ(a.visible.shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(a.infrared, a.visible.slice_channels(1, 1));
  const ImagePair full = random_crop(p, 64, 11);
  EXPECT_EQ(full.visible, p.visible);
  EXPECT_EQ(full.infrared, p.infrared);
  EXPECT_EQ(kind_of([&] { random_crop(p, 128, 0); }), ErrorKind::CropTooLarge);
  EXPECT_EQ(kind_of([&] { random_crop(p, 24, 0); }), ErrorKind::DimensionNotDivisible);
}

TEST(Luminance, OracleAndLinearity) {
  EXPECT_NEAR(to_luminance(Tensor({1, 3, 2, 2}, 1.0)).min(), 1.0, 1e-15);
  Tensor red({1, 3, 1, 1}, std::vector<double>{1, 0, 0});
  EXPECT_DOUBLE_EQ(to_luminance(red)[0], 0.299);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({2, 3, 5, 5}, rng);
  const Tensor y = to_luminance(x);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const double ref = 0.299 * x.at(n, 0, i, j) + 0.587 * x.at(n, 1, i, j) + 0.114 * x.at(n, 2, i, j);
        EXPECT_NEAR(y.at(n, 0, i, j), ref, 1e-15);
      }
  Tensor scaled = x;
  for (double& v : scaled.values()) v *= 0.37;
  Tensor expect = y;
  for (double& v : expect.values()) v *= 0.37;
  EXPECT_LT(max_abs_diff(to_luminance(scaled), expect), 1e-15);
}

TEST(Luminance, YCbCrRoundTrip) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({1, 3, 6, 6}, rng);
  EXPECT_LT(max_abs_diff(ycbcr_to_rgb(rgb_to_ycbcr(x)), x), 1e-12);
  const Tensor ycc = rgb_to_ycbcr(x);
  EXPECT_LT(max_abs_diff(ycc.slice_channels(0, 1), to_luminance(x)), 1e-15);
}

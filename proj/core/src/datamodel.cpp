#include "amfusion/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "amfusion/error.hpp"
#include "amfusion/image_io.hpp"

namespace amfusion {

void FusionConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
  if (base_channels <= 0) fail("base_channels must be positive");
  if (!(sigma > 0.0)) fail("sigma must be > 0");
  if (alpha < 0.0 || beta < 0.0 || eta < 0.0) fail("alpha, beta and eta must be >= 0");
  if (!(exposure_level > 0.0 && exposure_level < 1.0)) fail("exposure_level must lie in (0,1)");
  if (exposure_patch <= 0) fail("exposure_patch must be positive");
  if (heads <= 0) fail("heads must be positive");
  for (int level : {4, 5}) {
    if (channels(level) % heads != 0) {
      throw Error(ErrorKind::HeadDivisibility, "level " + std::to_string(level) + " width " +
                                                   std::to_string(channels(level)) +
                                                   " not divisible by heads " + std::to_string(heads));
    }
  }
  if (detector != "tiny" && detector != "null" && detector.rfind("external:", 0) != 0) {
    fail("detector must be tiny, null or external:<path>, got '" + detector + "'");
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorKind::InvalidConfig, "bad value '" + value + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorKind::InvalidConfig, "bad boolean '" + value + "' for " + key);
}

using Setter = std::function<void(FusionConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto int_field = [](int FusionConfig::*m) {
      return [m](FusionConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<int>(k, v); };
    };
    auto dbl_field = [](double FusionConfig::*m) {
      return [m](FusionConfig& c, const std::string& k, const std::string& v) {
        c.*m = parse_number<double>(k, v);
      };
    };
    auto bool_field = [](bool FusionConfig::*m) {
      return [m](FusionConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); };
    };
    t["base_channels"] = int_field(&FusionConfig::base_channels);
    t["sigma"] = dbl_field(&FusionConfig::sigma);
    t["eta"] = dbl_field(&FusionConfig::eta);
    t["alpha"] = dbl_field(&FusionConfig::alpha);
    t["beta"] = dbl_field(&FusionConfig::beta);
    t["exposure_level"] = dbl_field(&FusionConfig::exposure_level);
    t["exposure_patch"] = int_field(&FusionConfig::exposure_patch);
    t["heads"] = int_field(&FusionConfig::heads);
    t["use_idfm"] = bool_field(&FusionConfig::use_idfm);
    t["use_dsfm"] = bool_field(&FusionConfig::use_dsfm);
    t["use_srm"] = bool_field(&FusionConfig::use_srm);
    t["use_detection_features"] = bool_field(&FusionConfig::use_detection_features);
    t["use_ill_loss"] = bool_field(&FusionConfig::use_ill_loss);
    t["use_int_ill"] = bool_field(&FusionConfig::use_int_ill);
    t["use_exp"] = bool_field(&FusionConfig::use_exp);
    t["use_grad"] = bool_field(&FusionConfig::use_grad);
    t["use_ssim"] = bool_field(&FusionConfig::use_ssim);
    t["detector"] = [](FusionConfig& c, const std::string&, const std::string& v) { c.detector = v; };
    t["seed"] = [](FusionConfig& c, const std::string& k, const std::string& v) {
      c.seed = parse_number<std::uint64_t>(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

FusionConfig parse_config(const std::string& text) {
  FusionConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "'");
    it->second(config, key, value);
  }
  config.validate();
  return config;
}

FusionConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const FusionConfig& c) {
  std::ostringstream out;
  out.precision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "base_channels = " << c.base_channels << '\n'
      << "sigma = " << c.sigma << '\n'
      << "eta = " << c.eta << '\n'
      << "alpha = " << c.alpha << '\n'
      << "beta = " << c.beta << '\n'
      << "exposure_level = " << c.exposure_level << '\n'
      << "exposure_patch = " << c.exposure_patch << '\n'
      << "heads = " << c.heads << '\n'
      << "use_idfm = " << b(c.use_idfm) << '\n'
      << "use_dsfm = " << b(c.use_dsfm) << '\n'
      << "use_srm = " << b(c.use_srm) << '\n'
      << "use_detection_features = " << b(c.use_detection_features) << '\n'
      << "use_ill_loss = " << b(c.use_ill_loss) << '\n'
      << "use_int_ill = " << b(c.use_int_ill) << '\n'
      << "use_exp = " << b(c.use_exp) << '\n'
      << "use_grad = " << b(c.use_grad) << '\n'
      << "use_ssim = " << b(c.use_ssim) << '\n'
      << "detector = " << c.detector << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

void ImagePair::validate() const {
  const Shape& v = visible.shape();
  const Shape& g = infrared.shape();
  if (v.n != 1 || v.c != 3 || g.n != 1 || g.c != 1) {
    throw Error(ErrorKind::BadShape, "expected 1x3xHxW visible and 1x1xHxW infrared, got " + v.str() +
                                         " and " + g.str());
  }
  if (v.h != g.h || v.w != g.w) {
    throw Error(ErrorKind::DimensionMismatch, "visible " + v.str() + " vs infrared " + g.str());
  }
  if (v.h % kSpatialMultiple != 0 || v.w % kSpatialMultiple != 0) {
    throw Error(ErrorKind::DimensionNotDivisible,
                std::to_string(v.h) + "x" + std::to_string(v.w) + " is not a multiple of 16");
  }
}

ImagePair load_image_pair(const std::filesystem::path& visible_path,
                          const std::filesystem::path& infrared_path, std::string id) {
  ImagePair pair;
  pair.visible = read_png(visible_path);
  Tensor ir = read_png(infrared_path);
  if (pair.visible.shape().c == 1) {
    // Gray visible input: replicate into three equal channels.
    Tensor rgb(Shape{1, 3, pair.visible.shape().h, pair.visible.shape().w});
    for (int c = 0; c < 3; ++c) {
      std::copy_n(pair.visible.plane(0, 0), pair.visible.shape().plane(), rgb.plane(0, c));
    }
    pair.visible = std::move(rgb);
  }
  pair.infrared = ir.shape().c == 3 ? to_luminance(ir) : std::move(ir);
  pair.id = id.empty() ? visible_path.stem().string() : std::move(id);
  pair.validate();
  return pair;
}

ImagePair random_crop(const ImagePair& pair, int size, std::uint64_t seed) {
  const int h = pair.height();
  const int w = pair.width();
  if (size <= 0 || size > std::min(h, w)) {
    throw Error(ErrorKind::CropTooLarge,
                "crop " + std::to_string(size) + " exceeds " + std::to_string(h) + "x" + std::to_string(w));
  }
  if (size % kSpatialMultiple != 0) {
    throw Error(ErrorKind::DimensionNotDivisible, "crop size " + std::to_string(size) + " not a multiple of 16");
  }
  std::mt19937_64 rng(seed);
  const int y0 = std::uniform_int_distribution<int>(0, h - size)(rng);
  const int x0 = std::uniform_int_distribution<int>(0, w - size)(rng);
  auto crop = [&](const Tensor& t) {
    Tensor out(Shape{1, t.shape().c, size, size});
    for (int c = 0; c < t.shape().c; ++c) {
      for (int y = 0; y < size; ++y) {
        std::copy_n(t.plane(0, c) + static_cast<std::size_t>(y0 + y) * w + x0, size,
                    out.plane(0, c) + static_cast<std::size_t>(y) * size);
      }
    }
    return out;
  };
  return ImagePair{crop(pair.visible), crop(pair.infrared), pair.id};
}

Tensor to_luminance(const Tensor& rgb) {
  const Shape s = rgb.shape();
  if (s.c != 3) throw Error(ErrorKind::BadShape, "to_luminance expects 3 channels, got " + s.str());
  Tensor y(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    const double* r = rgb.plane(n, 0);
    const double* g = rgb.plane(n, 1);
    const double* b = rgb.plane(n, 2);
    double* out = y.plane(n, 0);
    for (std::size_t i = 0; i < s.plane(); ++i) out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  return y;
}

Tensor rgb_to_ycbcr(const Tensor& rgb) {
  const Shape s = rgb.shape();
  if (s.c != 3) throw Error(ErrorKind::BadShape, "rgb_to_ycbcr expects 3 channels, got " + s.str());
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      const double r = rgb.plane(n, 0)[i];
      const double g = rgb.plane(n, 1)[i];
      const double b = rgb.plane(n, 2)[i];
      const double y = 0.299 * r + 0.587 * g + 0.114 * b;
      out.plane(n, 0)[i] = y;
      out.plane(n, 1)[i] = 0.5 + (b - y) / 1.772;
      out.plane(n, 2)[i] = 0.5 + (r - y) / 1.402;
    }
  }
  return out;
}

Tensor ycbcr_to_rgb(const Tensor& ycc) {
  const Shape s = ycc.shape();
  if (s.c != 3) throw Error(ErrorKind::BadShape, "ycbcr_to_rgb expects 3 channels, got " + s.str());
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      const double y = ycc.plane(n, 0)[i];
      const double cb = ycc.plane(n, 1)[i] - 0.5;
      const double cr = ycc.plane(n, 2)[i] - 0.5;
      const double r = y + 1.402 * cr;
      const double b = y + 1.772 * cb;
      const double g = (y - 0.299 * r - 0.114 * b) / 0.587;
      out.plane(n, 0)[i] = r;
      out.plane(n, 1)[i] = g;
      out.plane(n, 2)[i] = b;
    }
  }
  return out;
}

}  // namespace amfusion

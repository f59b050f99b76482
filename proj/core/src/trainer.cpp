#include "amfusion/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "amfusion/error.hpp"
#include "amfusion/image_io.hpp"
#include "amfusion/metrics.hpp"
#include "amfusion/ops.hpp"
#include "amfusion/synth.hpp"

namespace amfusion {

TrainSchedule TrainSchedule::desk() { return TrainSchedule{}; }

TrainSchedule TrainSchedule::paper() {
  TrainSchedule s;
  s.phase1_epochs = 200;
  s.phase2_epochs = 50;
  s.batch = 16;
  s.crop = 256;
  return s;
}

TrainSchedule TrainSchedule::for_scale(Scale scale) { return scale == Scale::Paper ? paper() : desk(); }

void TrainSchedule::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (phase1_epochs < 1 || phase2_epochs < 1) fail("epochs must be >= 1");
  if (phase1_lr_end > phase1_lr_start || phase2_lr_end > phase2_lr_start) fail("lr_end must not exceed lr_start");
  if (phase1_lr_end < 0.0 || phase2_lr_end < 0.0) fail("learning rates must be non-negative");
  if (batch < 1) fail("batch must be >= 1");
  if (crop < kSpatialMultiple || crop % kSpatialMultiple != 0) fail("crop must be a positive multiple of 16");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0,1)");
}

int TrainSchedule::steps_per_epoch(int dataset_size) const {
  if (dataset_size <= 0) throw Error(ErrorKind::EmptyDataset, "no training pairs");
  return std::max(1, dataset_size / batch);
}

int TrainSchedule::total_steps(int dataset_size) const {
  return (phase1_epochs + phase2_epochs) * steps_per_epoch(dataset_size);
}

double cosine_lr(double start, double end, int t, int steps) {
  if (steps <= 1) return start;
  const double progress = static_cast<double>(t) / (steps - 1);
  return end + (start - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void Adam::step(ParameterList& params, double lr) {
  for (auto& [name, param] : params) {
    if (!param->trainable() || param->var().grad().empty()) continue;
    const Tensor& g = param->var().grad();
    Moments& s = state_[name];
    if (s.m.empty()) {
      s.m = Tensor(g.shape());
      s.v = Tensor(g.shape());
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    Tensor& w = param->value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + epsilon_);
    }
  }
}

std::vector<ImagePair> load_dataset(const std::filesystem::path& dir) {
  std::vector<std::string> ids;
  if (std::filesystem::exists(dir / "manifest.txt")) {
    for (const auto& entry : read_manifest(dir)) ids.push_back(entry.id);
  } else if (std::filesystem::is_directory(dir)) {
    const std::string suffix = "_vis.png";
    for (const auto& f : std::filesystem::directory_iterator(dir)) {
      const std::string name = f.path().filename().string();
      if (name.size() > suffix.size() && name.ends_with(suffix)) {
        const std::string id = name.substr(0, name.size() - suffix.size());
        if (std::filesystem::exists(dir / (id + "_ir.png"))) ids.push_back(id);
      }
    }
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw Error(ErrorKind::EmptyDataset, "no image pairs in " + dir.string());
  std::vector<ImagePair> pairs;
  for (const auto& id : ids) pairs.push_back(load_image_pair(dir / (id + "_vis.png"), dir / (id + "_ir.png"), id));
  return pairs;
}

namespace {

struct Batch {
  Tensor visible;
  Tensor visible_y;
  Tensor infrared;
};

Batch make_batch(const std::vector<ImagePair>& samples) {
  std::vector<Tensor> vis;
  std::vector<Tensor> ir;
  for (const auto& p : samples) {
    vis.push_back(p.visible);
    ir.push_back(p.infrared);
  }
  Batch b;
  b.visible = stack_batch(vis);
  b.visible_y = to_luminance(b.visible);
  b.infrared = stack_batch(ir);
  return b;
}

LossTerms batch_loss(const FusionModel& model, const Batch& b) {
  const Var fused = model.forward(Var::constant(b.visible), Var::constant(b.infrared)).fused;
  return total_loss(LossInputs{fused, b.visible, b.visible_y, b.infrared}, model.config());
}

std::string rng_text(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

}  // namespace

void check_finite(const LossReport& r, std::int64_t step) {
  const std::pair<const char*, double> terms[] = {
      {"grad", r.grad}, {"ssim", r.ssim}, {"int_ill", r.int_ill}, {"exp", r.exp}, {"total", r.total}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "loss term '" << name << "' is " << value << " at step " << step;
      throw Error(ErrorKind::NonFiniteLoss, msg.str());
    }
  }
}

LossReport dataset_loss(const FusionModel& model, const std::vector<ImagePair>& pairs, int batch) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs to score");
  NoGradGuard no_grad;
  LossReport sum;
  double weight = 0.0;
  for (std::size_t begin = 0; begin < pairs.size(); begin += batch) {
    const std::size_t end = std::min(pairs.size(), begin + batch);
    const std::vector<ImagePair> chunk(pairs.begin() + begin, pairs.begin() + end);
    const LossReport r = batch_loss(model, make_batch(chunk)).report();
    const double n = static_cast<double>(chunk.size());
    sum.grad += n * r.grad;
    sum.ssim += n * r.ssim;
    sum.int_ill += n * r.int_ill;
    sum.exp += n * r.exp;
    sum.total += n * r.total;
    weight += n;
  }
  sum.grad /= weight;
  sum.ssim /= weight;
  sum.int_ill /= weight;
  sum.exp /= weight;
  sum.total /= weight;
  return sum;
}

TrainResult train(const std::vector<ImagePair>& pairs, const FusionConfig& config, const TrainSchedule& schedule,
                  const std::filesystem::path& out_dir, const TrainOptions& options) {
  schedule.validate();
  if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no training pairs");
  for (const auto& p : pairs) {
    p.validate();
    if (schedule.crop > p.height() || schedule.crop > p.width()) {
      throw Error(ErrorKind::CropTooLarge, "crop " + std::to_string(schedule.crop) + " exceeds pair '" + p.id +
                                               "' of " + std::to_string(p.height()) + "x" +
                                               std::to_string(p.width()));
    }
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "loss_log.csv");
  log << "step,lr,grad,ssim,int_ill,exp,total\n";
  log << std::setprecision(10);

  TrainResult result{FusionModel(config), {}, {}};
  FusionModel& model = result.model;
  Rng rng(config.seed);
  Adam adam(schedule.beta1, schedule.beta2, schedule.epsilon);
  const int n = static_cast<int>(pairs.size());
  const int steps = schedule.steps_per_epoch(n);
  const int per_batch = std::min(schedule.batch, n);
  std::vector<int> order(n);

  std::int64_t step = 0;
  for (int phase = 1; phase <= 2; ++phase) {
    if (phase == 1) {
      freeze(model.detector());
    } else {
      unfreeze(model.detector());
    }
    const int epochs = phase == 1 ? schedule.phase1_epochs : schedule.phase2_epochs;
    const double lr_start = phase == 1 ? schedule.phase1_lr_start : schedule.phase2_lr_start;
    const double lr_end = phase == 1 ? schedule.phase1_lr_end : schedule.phase2_lr_end;
    const int phase_steps = epochs * steps;
    int t = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      for (int i = 0; i < n; ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), rng);
      for (int s = 0; s < steps; ++s) {
        std::vector<ImagePair> samples;
        for (int k = 0; k < per_batch; ++k) {
          samples.push_back(random_crop(pairs[order[s * per_batch + k]], schedule.crop, rng()));
        }
        ParameterList params = model.parameters();
        const LossTerms terms = batch_loss(model, make_batch(samples));
        ++step;
        const LossReport report = terms.report();
        check_finite(report, step);
        backward(terms.total);
        const double lr = cosine_lr(lr_start, lr_end, t++, phase_steps);
        adam.step(params, lr);
        for (auto& p : params) p.param->zero_grad();

        const LogRow row{step, phase, lr, report};
        log << step << ',' << lr << ',' << report.grad << ',' << report.ssim << ',' << report.int_ill << ','
            << report.exp << ',' << report.total << '\n';
        log.flush();
        result.history.push_back(row);
        if (options.on_step) options.on_step(row);
      }
      result.state = TrainState{phase, epoch + 1, step, rng_text(rng)};
      if (options.write_checkpoints) save_checkpoint(out_dir / "checkpoint.amf", model, result.state);
    }
  }
  return result;
}

TrainResult train(const std::filesystem::path& dataset_dir, const FusionConfig& config,
                  const TrainSchedule& schedule, const std::filesystem::path& out_dir,
                  const TrainOptions& options) {
  return train(load_dataset(dataset_dir), config, schedule, out_dir, options);
}

void fuse_file(const std::filesystem::path& checkpoint, const std::filesystem::path& visible,
               const std::filesystem::path& infrared, const std::filesystem::path& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const ImagePair pair = load_image_pair(visible, infrared);
  write_png(out, ckpt.model.fuse(pair));
}

std::vector<EvalRow> evaluate(const FuseFn& fuse, const std::vector<ImagePair>& pairs) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs to evaluate");
  std::vector<EvalRow> rows;
  MetricReport mean;
  for (const auto& pair : pairs) {
    const Tensor fused = fuse(pair);
    const MetricReport m = evaluate_metrics(fused, to_luminance(pair.visible), pair.infrared);
    rows.push_back(EvalRow{pair.id, m});
    mean.en += m.en;
    mean.mi += m.mi;
    mean.sd += m.sd;
  }
  const double count = static_cast<double>(pairs.size());
  rows.push_back(EvalRow{"mean", MetricReport{mean.en / count, mean.mi / count, mean.sd / count}});
  return rows;
}

std::vector<EvalRow> evaluate(const FusionModel& model, const std::filesystem::path& dataset_dir) {
  return evaluate([&model](const ImagePair& p) { return model.fuse_luminance(p); }, load_dataset(dataset_dir));
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::FileNotFound, "cannot write " + path.string());
  out << "id,en,mi,sd\n" << std::setprecision(10);
  for (const auto& r : rows) out << r.id << ',' << r.metrics.en << ',' << r.metrics.mi << ',' << r.metrics.sd << '\n';
}

}  // namespace amfusion

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "amfusion/checkpoint.hpp"
#include "amfusion/losses.hpp"
#include "amfusion/model.hpp"

namespace amfusion {

enum class Scale { Desk, Paper };

/// Two-phase schedule: phase 1 trains with the detector frozen, phase 2
/// fine-tunes everything. Each phase decays its rate with a cosine.
struct TrainSchedule {
  int phase1_epochs = 50;
  double phase1_lr_start = 2e-4;
  double phase1_lr_end = 1e-6;
  int phase2_epochs = 10;
  double phase2_lr_start = 1e-6;
  double phase2_lr_end = 1e-8;
  int batch = 4;
  int crop = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static TrainSchedule desk();
  static TrainSchedule paper();
  static TrainSchedule for_scale(Scale scale);
  void validate() const;

  /// Drop-last batching: floor(n / batch), but at least one step whose batch
  /// holds all n samples when batch > n.
  int steps_per_epoch(int dataset_size) const;
  int total_steps(int dataset_size) const;
};

/// end + (start - end) * (1 + cos(pi * t / (steps - 1))) / 2 for t in
/// [0, steps); a single-step phase runs at `start`.
double cosine_lr(double start, double end, int t, int steps);

/// Adam with bias correction and a step count per parameter. Parameters that
/// are not trainable or carry no gradient are left alone.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}
  void step(ParameterList& params, double lr);

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;
  };
  double beta1_;
  double beta2_;
  double epsilon_;
  std::map<std::string, Moments> state_;
};

/// Pairs named by manifest.txt, or every {id}_vis.png with a matching
/// {id}_ir.png when there is no manifest. Throws EmptyDataset.
std::vector<ImagePair> load_dataset(const std::filesystem::path& dir);

struct LogRow {
  std::int64_t step = 0;
  int phase = 1;
  double lr = 0.0;
  LossReport loss;
};

struct TrainOptions {
  bool write_checkpoints = true;
  std::function<void(const LogRow&)> on_step;
};

struct TrainResult {
  FusionModel model;
  std::vector<LogRow> history;
  TrainState state;
};

/// Throws NonFiniteLoss naming the first non-finite term of `report`.
void check_finite(const LossReport& report, std::int64_t step);

/// Loss of `model` over `pairs` in fixed batches, without gradients.
LossReport dataset_loss(const FusionModel& model, const std::vector<ImagePair>& pairs, int batch);

/// Runs both phases. Writes out_dir/loss_log.csv (one row per step) and
/// out_dir/checkpoint.amf after every epoch. Throws NonFiniteLoss naming the
/// offending term.
TrainResult train(const std::vector<ImagePair>& pairs, const FusionConfig& config, const TrainSchedule& schedule,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});
TrainResult train(const std::filesystem::path& dataset_dir, const FusionConfig& config,
                  const TrainSchedule& schedule, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

void fuse_file(const std::filesystem::path& checkpoint, const std::filesystem::path& visible,
               const std::filesystem::path& infrared, const std::filesystem::path& out);

struct EvalRow {
  std::string id;
  MetricReport metrics;
};

/// Maps a pair to its fused luminance (1x1xHxW).
using FuseFn = std::function<Tensor(const ImagePair&)>;

/// Per-image metrics of the fused luminance against the visible luminance and
/// the infrared image, followed by a "mean" row.
std::vector<EvalRow> evaluate(const FuseFn& fuse, const std::vector<ImagePair>& pairs);
std::vector<EvalRow> evaluate(const FusionModel& model, const std::filesystem::path& dataset_dir);
void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows);

}  // namespace amfusion

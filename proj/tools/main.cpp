// amfusion: train / fuse / eval / synth front end.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "amfusion/checkpoint.hpp"
#include "amfusion/error.hpp"
#include "amfusion/synth.hpp"
#include "amfusion/trainer.hpp"

namespace {

int run_train(const std::string& data, const std::string& config_path, const std::string& out,
              const std::string& scale, std::optional<int> phase1, std::optional<int> phase2,
              std::optional<int> batch, std::optional<int> crop) {
  using namespace amfusion;
  const FusionConfig config = config_path.empty() ? FusionConfig{} : load_config(config_path);
  TrainSchedule schedule = TrainSchedule::for_scale(scale == "paper" ? Scale::Paper : Scale::Desk);
  if (phase1) schedule.phase1_epochs = *phase1;
  if (phase2) schedule.phase2_epochs = *phase2;
  if (batch) schedule.batch = *batch;
  if (crop) schedule.crop = *crop;

  const auto pairs = load_dataset(data);
  const int total = schedule.total_steps(static_cast<int>(pairs.size()));
  std::cout << "training on " << pairs.size() << " pairs, " << total << " steps\n";
  TrainOptions options;
  options.on_step = [total](const LogRow& row) {
    if (row.step == 1 || row.step % 10 == 0 || row.step == total) {
      std::printf("step %lld/%d phase %d lr %.3e total %.6f\n", static_cast<long long>(row.step), total, row.phase,
                  row.lr, row.loss.total);
      std::fflush(stdout);
    }
  };
  train(pairs, config, schedule, out, options);
  std::cout << "checkpoint: " << (std::filesystem::path(out) / "checkpoint.amf").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Infrared-visible image fusion"};
  app.require_subcommand(1);

  std::string data;
  std::string config;
  std::string out;
  std::string scale = "desk";
  std::optional<int> phase1;
  std::optional<int> phase2;
  std::optional<int> batch;
  std::optional<int> crop;
  auto* train = app.add_subcommand("train", "Two-phase unsupervised training");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--config", config, "Config file of key = value lines");
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--scale", scale, "Schedule preset")->check(CLI::IsMember({"desk", "paper"}));
  train->add_option("--phase1-epochs", phase1, "Override phase-1 epochs");
  train->add_option("--phase2-epochs", phase2, "Override phase-2 epochs");
  train->add_option("--batch", batch, "Override batch size");
  train->add_option("--crop", crop, "Override crop size");

  std::string ckpt;
  std::string vis;
  std::string ir;
  auto* fuse = app.add_subcommand("fuse", "Fuse one visible/infrared pair");
  fuse->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  fuse->add_option("--vis", vis, "Visible PNG")->required();
  fuse->add_option("--ir", ir, "Infrared PNG")->required();
  fuse->add_option("--out", out, "Output PNG")->required();

  auto* eval = app.add_subcommand("eval", "EN/MI/SD over a dataset");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--out", out, "Output CSV")->required();

  int count = 8;
  int size = 64;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate synthetic night scenes");
  synth->add_option("--n", count, "Number of scenes")->required();
  synth->add_option("--size", size, "Square image size (multiple of 16)")->required();
  synth->add_option("--seed", seed, "Seed")->required();
  synth->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(data, config, out, scale, phase1, phase2, batch, crop);
    if (*fuse) {
      amfusion::fuse_file(ckpt, vis, ir, out);
      return 0;
    }
    if (*eval) {
      const auto model = amfusion::load_checkpoint(ckpt).model;
      amfusion::write_eval_csv(out, amfusion::evaluate(model, data));
      return 0;
    }
    if (*synth) {
      const auto entries = amfusion::write_synthetic_dataset(out, count, size, seed);
      std::cout << "wrote " << entries.size() << " scenes to " << out << '\n';
      return 0;
    }
  } catch (const amfusion::Error& e) {
    std::cerr << "error [" << amfusion::to_string(e.kind()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

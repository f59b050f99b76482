#include "amfusion/checkpoint.hpp"

#include "amfusion/archive.hpp"
#include "amfusion/error.hpp"

namespace amfusion {

namespace {
constexpr const char* kKind = "amfusion-model";
}

void save_checkpoint(const std::filesystem::path& path, FusionModel& model, const TrainState& state) {
  nlohmann::json meta;
  meta["kind"] = kKind;
  meta["config"] = format_config(model.config());
  meta["phase"] = state.phase;
  meta["epoch"] = state.epoch;
  meta["step"] = state.step;
  meta["rng_state"] = state.rng_state;
  meta["detector_frozen"] = model.detector().frozen();
  write_tensor_archive(path, model.parameters(), std::move(meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = read_archive(path);
  try {
    const auto& meta = archive.meta;
    if (meta.at("kind").get<std::string>() != kKind) {
      throw Error(ErrorKind::BadCheckpoint, path.string() + " is not a model checkpoint");
    }
    FusionModel model(parse_config(meta.at("config").get<std::string>()), false);
    ParameterList params = model.parameters();
    assign_parameters(archive, params);
    model.detector().set_frozen(meta.value("detector_frozen", false));
    TrainState state;
    state.phase = meta.at("phase").get<int>();
    state.epoch = meta.at("epoch").get<int>();
    state.step = meta.at("step").get<std::int64_t>();
    state.rng_state = meta.at("rng_state").get<std::string>();
    return Checkpoint{std::move(model), std::move(state)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, path.string() + ": " + e.what());
  }
}

}  // namespace amfusion

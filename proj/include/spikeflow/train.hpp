#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spikeflow/config.hpp"
#include "spikeflow/model.hpp"
#include "spikeflow/objectives.hpp"
#include "spikeflow/synth.hpp"

namespace spikeflow {

enum class LossMode { Ssl, Supervised };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode m);

enum class Precision { F32, F64 };

struct TrainConfig {
  size_t epochs = 100;
  size_t batch = 8;
  double lr = 1e-4;
  double lr_decay = 0.7;       // multiplicative, applied every lr_decay_every
  size_t lr_decay_every = 10;  // epochs; 0 disables the schedule
  size_t crop_h = 256;
  size_t crop_w = 256;
  bool flip_h = true;
  bool flip_v = true;
  bool rot90 = true;
  LossMode loss_mode = LossMode::Ssl;
  double loss_alpha = 10.0;
  double charbonnier_r = 0.45;
  double charbonnier_eta = 1e-3;
  bool multiscale = false;    // supervise intermediate scale flows too
  double grad_clip = 0.0;     // max grad norm; 0 disables
  double val_fraction = 0.1;
  size_t checkpoint_every = 10;  // epochs; 0 = final only
  double early_stop_aee = 0.0;   // stop once val AEE <= this; 0 disables
  uint64_t seed = 0;
  Precision precision = Precision::F32;

  // Paper protocol defaults: SSL trains 100 epochs, batch 8, lr 1e-4 decayed
  // 0.7x every 10 epochs, 256x256 crops; supervised trains 50 epochs at a
  // fixed lr with 288x384 crops.
  static TrainConfig defaults_for(LossMode mode);
};

// One training sample: grouped event frames plus the supervision targets.
template <typename S>
struct Sample {
  Tensor<S> frames;       // [T,4,H,W]
  Tensor<S> image_before; // [H,W]
  Tensor<S> image_after;  // [H,W]
  Tensor<S> gt_flow;      // [2,H,W]
  Tensor<S> mask;         // [H,W] event mask
};

template <typename S>
Sample<S> sample_from_scene(const LoadedScene& scene, size_t bins);

// [T,4,H,W] grouped frames flattened back to [2B,H,W] volume channels for
// the analog single-pass input.
template <typename S>
Tensor<S> frames_to_channels(const Tensor<S>& frames);

// Spatial transform applied jointly to frames, images, flow, and mask.
// Flips negate the matching flow component; each quarter-turn maps
// (u, v) -> (v, -u). Crop happens first.
struct AugmentOps {
  size_t crop_y = 0, crop_x = 0;
  size_t crop_h = 0, crop_w = 0;  // 0 = no crop
  bool flip_h = false;
  bool flip_v = false;
  int rot90 = 0;  // quarter turns, 0..3
};

template <typename S>
Sample<S> augment(const Sample<S>& sample, const AugmentOps& ops);

// Draws the per-sample transform from the counter RNG keyed by
// (seed, epoch, index), so loader order can never change results.
AugmentOps draw_augment(const TrainConfig& cfg, size_t in_h, size_t in_w,
                        uint64_t epoch, uint64_t index);

template <typename S>
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t step_count = 0;
  std::vector<Tensor<S>> m, v;

  void init(const std::vector<NamedParam<S>>& params);
  void step(std::vector<NamedParam<S>>& params, double lr);
};

struct StepStats {
  double loss = 0;       // mean per-sample loss
  size_t samples = 0;
};

// Forward/backward over one batch with summed gradients and a single Adam
// update; thresholds and leaks are clamped afterwards. Batch samples may be
// sharded over workers; gradients reduce in sample order regardless.
template <typename S>
StepStats train_step(FlowNetwork<S>& net, const std::vector<Sample<S>>& batch,
                     const TrainConfig& cfg, Adam<S>& opt, double lr);

struct EvalResult {
  double aee = 0;
  double pe1 = 0, pe2 = 0, pe3 = 0;
  size_t samples = 0;
};

template <typename S>
EvalResult evaluate(const FlowNetwork<S>& net,
                    const std::vector<Sample<S>>& samples);

template <typename S>
std::vector<double> mean_activity(const FlowNetwork<S>& net,
                                  const std::vector<Sample<S>>& samples);

struct EpochRecord {
  size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_aee = 0;
  std::vector<double> activity;
  std::vector<double> v_th;
  std::vector<double> leak;
};

struct FitResult {
  std::vector<EpochRecord> records;
  double initial_val_aee = 0;
  double final_val_aee = 0;
  size_t epochs_run = 0;
};

double schedule_lr(const TrainConfig& cfg, size_t epoch);

template <typename S>
struct FitHooks {
  // Called after each epoch; return false to stop early.
  std::function<bool(const EpochRecord&)> on_epoch;
};

// Epoch loop: shuffled batching, lr schedule, periodic checkpoints into
// out_dir (empty = none), per-epoch log records. Resumes exactly from a
// checkpoint saved by save_checkpoint.
template <typename S>
FitResult fit(FlowNetwork<S>& net, std::vector<Sample<S>> dataset,
              const TrainConfig& cfg, const std::string& out_dir,
              Adam<S>* opt = nullptr, size_t start_epoch = 0,
              const FitHooks<S>* hooks = nullptr);

template <typename S>
void save_checkpoint(FlowNetwork<S>& net, const Adam<S>& opt,
                     const TrainConfig& cfg, size_t next_epoch,
                     const std::string& path);

struct CheckpointInfo {
  ModelSpec spec;
  uint64_t seed = 0;
  size_t next_epoch = 0;
  Precision precision = Precision::F32;
};

CheckpointInfo read_checkpoint_info(const std::string& path);

template <typename S>
void load_checkpoint(const std::string& path, FlowNetwork<S>& net,
                     Adam<S>* opt);

// Known config keys for the strict CLI parse, and the mapping between a
// Config and a TrainConfig/ModelSpec pair.
const std::set<std::string>& known_config_keys();
TrainConfig train_config_from(const Config& cfg);
ModelSpec model_spec_from(const Config& cfg);

}  // namespace spikeflow

#include <filesystem>

#include "doctest.h"
#include "spikeflow/objectives.hpp"
#include "spikeflow/train.hpp"
#include "test_util.hpp"

using namespace spikeflow;
using testutil::random_tensor;
namespace fs = std::filesystem;

namespace {

ModelSpec tiny_spec() {
  ModelSpec spec;
  spec.base_channels = 2;
  spec.timesteps = 2;
  spec.bins = 4;
  spec.flow_scale = 8.0;
  spec.init_v_th = 0.6;
  spec.init_leak = 0.9;
  return spec;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg = TrainConfig::defaults_for(LossMode::Supervised);
  cfg.epochs = 2;
  cfg.batch = 2;
  cfg.lr = 1e-3;
  cfg.crop_h = 0;  // no crop
  cfg.crop_w = 0;
  cfg.val_fraction = 0.25;
  cfg.checkpoint_every = 0;
  cfg.seed = 5;
  return cfg;
}

template <typename S>
Sample<S> make_sample(uint64_t seed, size_t hw = 16, size_t t_len = 2) {
  Sample<S> s;
  s.frames = random_tensor<S>({t_len, 4, hw, hw}, seed, 0.0, 2.0);
  s.image_before = random_tensor<S>({hw, hw}, seed + 1, 0.0, 1.0);
  s.image_after = random_tensor<S>({hw, hw}, seed + 2, 0.0, 1.0);
  s.gt_flow = random_tensor<S>({2, hw, hw}, seed + 3, -2.0, 2.0);
  s.mask = Tensor<S>({hw, hw}, S(1));
  return s;
}

template <typename S>
std::vector<Sample<S>> synth_samples(size_t count, size_t hw, uint64_t seed) {
  std::vector<Sample<S>> out;
  for (size_t i = 0; i < count; ++i) {
    SceneParams p;
    p.pattern = i % 2 ? "checker" : "noise";
    Rng rng(seed, i);
    p.vx = rng.next_range(-3.0, 3.0);
    p.vy = rng.next_range(-3.0, 3.0);
    p.width = hw;
    p.height = hw;
    p.seed = Rng::mix(seed, i);
    out.push_back(sample_from_scene<S>(
        [&] {
          SynthScene sc = synth_scene(p);
          LoadedScene ls;
          ls.stream = sc.stream;
          ls.image_before = sc.image_before;
          ls.image_after = sc.image_after;
          ls.gt_flow = sc.gt_flow;
          return ls;
        }(),
        4));
  }
  return out;
}

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() /
                 ("spikeflow_train_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

template <typename S>
bool params_equal(FlowNetwork<S>& a, FlowNetwork<S>& b) {
  auto pa = a.parameters(), pb = b.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    for (size_t j = 0; j < pa[i].param->value.numel(); ++j)
      if (pa[i].param->value[j] != pb[i].param->value[j]) return false;
  return true;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("frames_to_channels inverts the former/latter grouping") {
  EventStream s;
  s.width = 8;
  s.height = 8;
  Rng rng(33, 0);
  uint64_t t = 0;
  for (int i = 0; i < 160; ++i) {
    t += rng.next_below(100);
    s.events.push_back({uint16_t(rng.next_below(8)),
                        uint16_t(rng.next_below(8)), t,
                        rng.next_double() < 0.5 ? Polarity::On
                                                : Polarity::Off});
  }
  EventVolume vol = build_event_volume(s, 6);
  GroupedInput g = group_former_latter(vol);
  Tensor<double> channels = frames_to_channels(g.frames);
  Tensor<double> direct = volume_to_channels(vol);
  REQUIRE(channels.same_shape(direct));
  for (size_t i = 0; i < channels.numel(); ++i)
    CHECK(channels[i] == direct[i]);
}

TEST_CASE("augment: horizontal flip mirrors layout and negates u") {
  Sample<double> s = make_sample<double>(40, 8);
  AugmentOps ops;
  ops.flip_h = true;
  Sample<double> f = augment(s, ops);
  for (size_t y = 0; y < 8; ++y)
    for (size_t x = 0; x < 8; ++x) {
      CHECK(f.image_before.at(y, x) == s.image_before.at(y, 7 - x));
      CHECK(f.gt_flow.at(0, y, x) == -s.gt_flow.at(0, y, 7 - x));
      CHECK(f.gt_flow.at(1, y, x) == s.gt_flow.at(1, y, 7 - x));
      CHECK(f.frames.at(1, 2, y, x) == s.frames.at(1, 2, y, 7 - x));
    }
}

TEST_CASE("augment: identity leaves the sample unchanged") {
  Sample<double> s = make_sample<double>(41, 8);
  Sample<double> id = augment(s, AugmentOps{});
  for (size_t i = 0; i < s.frames.numel(); ++i)
    CHECK(id.frames[i] == s.frames[i]);
  for (size_t i = 0; i < s.gt_flow.numel(); ++i)
    CHECK(id.gt_flow[i] == s.gt_flow[i]);
}

TEST_CASE("augment: flip twice is the identity") {
  Sample<double> s = make_sample<double>(42, 8);
  for (bool horizontal : {true, false}) {
    AugmentOps ops;
    ops.flip_h = horizontal;
    ops.flip_v = !horizontal;
    Sample<double> twice = augment(augment(s, ops), ops);
    for (size_t i = 0; i < s.frames.numel(); ++i)
      CHECK(twice.frames[i] == s.frames[i]);
    for (size_t i = 0; i < s.gt_flow.numel(); ++i)
      CHECK(twice.gt_flow[i] == s.gt_flow[i]);
    for (size_t i = 0; i < s.mask.numel(); ++i)
      CHECK(twice.mask[i] == s.mask[i]);
  }
}

TEST_CASE("augment: four quarter turns are the identity") {
  Sample<double> s = make_sample<double>(43, 8);
  AugmentOps ops;
  ops.rot90 = 1;
  Sample<double> r = s;
  for (int k = 0; k < 4; ++k) r = augment(r, ops);
  for (size_t i = 0; i < s.frames.numel(); ++i)
    CHECK(r.frames[i] == s.frames[i]);
  for (size_t i = 0; i < s.gt_flow.numel(); ++i)
    CHECK(r.gt_flow[i] == doctest::Approx(s.gt_flow[i]));
}

TEST_CASE("augment: photometric loss is invariant under joint transforms") {
  auto samples = synth_samples<double>(1, 16, 44);
  const Sample<double>& s = samples[0];
  const double base = photometric_loss(s.image_before, s.image_after,
                                       s.gt_flow, 0.45, 1e-3);
  for (int variant = 0; variant < 4; ++variant) {
    AugmentOps ops;
    ops.flip_h = variant & 1;
    ops.flip_v = variant & 2;
    Sample<double> a = augment(s, ops);
    const double transformed = photometric_loss(a.image_before, a.image_after,
                                                a.gt_flow, 0.45, 1e-3);
    CHECK(transformed == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("augment: crop larger than the input is rejected") {
  Sample<double> s = make_sample<double>(45, 8);
  AugmentOps ops;
  ops.crop_h = 16;
  ops.crop_w = 16;
  CHECK_THROWS_WITH_AS(augment(s, ops), doctest::Contains("crop larger"),
                       UsageError);

  TrainConfig cfg = tiny_train_config();
  cfg.crop_h = 32;
  cfg.crop_w = 32;
  CHECK_THROWS_AS(draw_augment(cfg, 16, 16, 0, 0), UsageError);
}

TEST_CASE("augment: crop keeps flow values and is deterministic per key") {
  Sample<double> s = make_sample<double>(46, 16);
  TrainConfig cfg = tiny_train_config();
  cfg.crop_h = 8;
  cfg.crop_w = 8;
  cfg.flip_h = false;
  cfg.flip_v = false;
  cfg.rot90 = false;
  AugmentOps a = draw_augment(cfg, 16, 16, 3, 7);
  AugmentOps b = draw_augment(cfg, 16, 16, 3, 7);
  CHECK(a.crop_x == b.crop_x);
  CHECK(a.crop_y == b.crop_y);
  Sample<double> c = augment(s, a);
  CHECK(c.image_before.dim(0) == 8);
  CHECK(c.gt_flow.at(0, 0, 0) == s.gt_flow.at(0, a.crop_y, a.crop_x));
}

TEST_CASE("lr schedule: 0.7 decay every 10 epochs") {
  TrainConfig cfg = TrainConfig::defaults_for(LossMode::Ssl);
  cfg.lr = 1e-4;
  CHECK(schedule_lr(cfg, 0) == doctest::Approx(1e-4));
  CHECK(schedule_lr(cfg, 9) == doctest::Approx(1e-4));
  CHECK(schedule_lr(cfg, 10) == doctest::Approx(0.7e-4));
  CHECK(schedule_lr(cfg, 20) == doctest::Approx(0.49e-4));

  TrainConfig sup = TrainConfig::defaults_for(LossMode::Supervised);
  sup.lr = 1e-4;
  CHECK(schedule_lr(sup, 40) == doctest::Approx(1e-4));  // fixed
}

TEST_CASE("train_step with lr 0 reports a loss and changes nothing") {
  ModelSpec spec = tiny_spec();
  FlowNetwork<double> net(spec, 60), ref(spec, 60);
  Adam<double> opt;
  opt.init(net.parameters());
  auto batch = synth_samples<double>(2, 16, 61);
  TrainConfig cfg = tiny_train_config();
  StepStats stats = train_step(net, batch, cfg, opt, 0.0);
  CHECK(stats.loss > 0.0);
  CHECK(stats.samples == 2);
  CHECK(params_equal(net, ref));
}

TEST_CASE("one batch of 2 equals two size-1 batches with summed grads") {
  ModelSpec spec = tiny_spec();
  auto batch = synth_samples<double>(2, 16, 62);
  TrainConfig cfg = tiny_train_config();

  FlowNetwork<double> a(spec, 63);
  Adam<double> opt_a;
  opt_a.init(a.parameters());
  train_step(a, batch, cfg, opt_a, 1e-3);

  FlowNetwork<double> b(spec, 63);
  Adam<double> opt_b;
  opt_b.init(b.parameters());
  // same computation, staged as two single-sample gradient accumulations
  {
    std::vector<Tensor<double>> g1 = b.make_grad_store();
    std::vector<Tensor<double>> g2 = b.make_grad_store();
    NetTrace<double> tr1, tr2;
    ForwardResult<double> r1 = b.forward(batch[0].frames, &tr1);
    Tensor<double> gf1(r1.flow.shape());
    supervised_loss(r1.flow, batch[0].gt_flow, &gf1);
    b.backward(gf1, tr1, g1);
    ForwardResult<double> r2 = b.forward(batch[1].frames, &tr2);
    Tensor<double> gf2(r2.flow.shape());
    supervised_loss(r2.flow, batch[1].gt_flow, &gf2);
    b.backward(gf2, tr2, g2);
    for (auto& p : b.parameters()) p.param->zero_grad();
    b.accumulate_grads(g1);
    b.accumulate_grads(g2);
    auto params = b.parameters();
    opt_b.step(params, 1e-3);
    b.apply_param_floors();
  }
  CHECK(params_equal(a, b));
}

TEST_CASE("ten overfitting steps on one synth batch strictly decrease loss") {
  ModelSpec spec;
  spec.base_channels = 8;  // Nano ladder
  spec.timesteps = 2;
  spec.bins = 4;
  spec.flow_scale = 8.0;
  spec.init_v_th = 0.6;
  spec.init_leak = 0.9;
  FlowNetwork<double> net(spec, 64);
  auto batch = synth_samples<double>(1, 32, 65);
  TrainConfig cfg = tiny_train_config();
  Adam<double> opt;
  opt.init(net.parameters());

  std::vector<double> losses;
  for (int step = 0; step < 10; ++step)
    losses.push_back(train_step(net, batch, cfg, opt, 2e-3).loss);
  for (size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("identical seeds give identical loss curves and parameters") {
  auto run = [&](uint64_t seed) {
    ModelSpec spec = tiny_spec();
    FlowNetwork<float> net(spec, seed);
    TrainConfig cfg = tiny_train_config();
    cfg.seed = seed;
    auto data = synth_samples<float>(6, 16, 66);
    FitResult r = fit(net, data, cfg, "");
    std::vector<float> flat;
    for (auto& p : net.parameters())
      for (size_t j = 0; j < p.param->value.numel(); ++j)
        flat.push_back(p.param->value[j]);
    return std::pair<FitResult, std::vector<float>>(r, flat);
  };
  auto [ra, pa] = run(7);
  auto [rb, pb] = run(7);
  REQUIRE(ra.records.size() == rb.records.size());
  for (size_t i = 0; i < ra.records.size(); ++i) {
    CHECK(ra.records[i].train_loss == rb.records[i].train_loss);
    CHECK(ra.records[i].val_aee == rb.records[i].val_aee);
  }
  CHECK(pa == pb);
}

TEST_CASE("fit with 0 epochs returns the initial state and a checkpoint") {
  auto dir = temp_dir("zero_epochs");
  ModelSpec spec = tiny_spec();
  FlowNetwork<float> net(spec, 70), ref(spec, 70);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs = 0;
  auto data = synth_samples<float>(4, 16, 71);
  FitResult r = fit(net, data, cfg, dir.string());
  CHECK(r.records.empty());
  CHECK(r.epochs_run == 0);
  CHECK(params_equal(net, ref));
  CHECK(fs::exists(dir / "checkpoint.ckpt"));
}

TEST_CASE("checkpoint resume reproduces an uninterrupted run exactly") {
  auto dir = temp_dir("resume");
  ModelSpec spec = tiny_spec();
  auto data = synth_samples<double>(6, 16, 72);
  TrainConfig cfg = tiny_train_config();
  cfg.precision = Precision::F64;
  cfg.epochs = 4;

  FlowNetwork<double> straight(spec, 73);
  fit(straight, data, cfg, "");

  FlowNetwork<double> twostage(spec, 73);
  Adam<double> opt;
  opt.init(twostage.parameters());
  TrainConfig first = cfg;
  first.epochs = 2;
  fit(twostage, data, first, (dir / "stage1").string(), &opt);

  FlowNetwork<double> resumed(spec, 73);
  Adam<double> opt2;
  load_checkpoint((dir / "stage1" / "checkpoint.ckpt").string(), resumed,
                  &opt2);
  CheckpointInfo info =
      read_checkpoint_info((dir / "stage1" / "checkpoint.ckpt").string());
  CHECK(info.next_epoch == 2);
  fit(resumed, data, cfg, "", &opt2, info.next_epoch);

  CHECK(params_equal(straight, resumed));
}

TEST_CASE("non-finite loss aborts the step with diagnostics") {
  ModelSpec spec = tiny_spec();
  FlowNetwork<double> net(spec, 74);
  auto p = net.parameters();
  p[0].param->value[0] = std::numeric_limits<double>::quiet_NaN();
  auto batch = synth_samples<double>(1, 16, 75);
  Adam<double> opt;
  opt.init(net.parameters());
  TrainConfig cfg = tiny_train_config();
  CHECK_THROWS_AS(train_step(net, batch, cfg, opt, 1e-3), NumericError);
}

TEST_CASE("supervised fit without ground truth is a data error") {
  ModelSpec spec = tiny_spec();
  FlowNetwork<float> net(spec, 76);
  auto data = synth_samples<float>(2, 16, 77);
  for (auto& s : data) s.gt_flow.fill(0.0f);
  TrainConfig cfg = tiny_train_config();
  CHECK_THROWS_AS(fit(net, data, cfg, ""), DataError);
}

TEST_CASE("threshold and leak move during training and stay clamped") {
  ModelSpec spec = tiny_spec();
  spec.init_v_th = 0.3;  // active from the first step so dynamics get credit
  FlowNetwork<double> net(spec, 78);
  for (auto& p : net.parameters())
    if (p.name.find("weight") != std::string::npos)
      for (size_t i = 0; i < p.param->value.numel(); ++i)
        p.param->value[i] *= 3.0;
  auto data = synth_samples<double>(4, 16, 79);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs = 3;
  cfg.lr = 5e-3;
  fit(net, data, cfg, "");
  bool moved = false;
  for (const auto& u : net.units()) {
    if (!u.has_neuron) continue;
    CHECK(u.v_th.value[0] >= kMinThreshold);
    CHECK(u.leak.value[0] <= 1.0);
    CHECK(u.leak.value[0] >= kMinLeak);
    if (std::abs(u.v_th.value[0] - spec.init_v_th) > 1e-3 ||
        std::abs(u.leak.value[0] - spec.init_leak) > 1e-3)
      moved = true;
  }
  CHECK(moved);
}

TEST_CASE("multiscale switch trains with finite gradients") {
  ModelSpec spec = tiny_spec();
  FlowNetwork<double> net(spec, 80);
  auto batch = synth_samples<double>(1, 16, 81);
  TrainConfig cfg = tiny_train_config();
  cfg.multiscale = true;
  Adam<double> opt;
  opt.init(net.parameters());
  StepStats stats = train_step(net, batch, cfg, opt, 1e-3);
  CHECK(std::isfinite(stats.loss));
  for (auto& p : net.parameters()) CHECK(p.param->value.all_finite());
}

TEST_CASE("config mapping: defaults, strictness, typos") {
  Config cfg = Config::from_string(
      "loss.mode = supervised\ntrain.epochs = 7\nseed = 11\n");
  TrainConfig tc = train_config_from(cfg);
  CHECK(tc.epochs == 7);
  CHECK(tc.loss_mode == LossMode::Supervised);
  CHECK(tc.crop_h == 288);  // supervised default
  CHECK(tc.crop_w == 384);
  CHECK(tc.lr_decay == 1.0);
  CHECK(tc.seed == 11);

  TrainConfig ssl = train_config_from(Config::from_string(""));
  CHECK(ssl.epochs == 100);
  CHECK(ssl.batch == 8);
  CHECK(ssl.lr == doctest::Approx(1e-4));
  CHECK(ssl.lr_decay == doctest::Approx(0.7));
  CHECK(ssl.lr_decay_every == 10);
  CHECK(ssl.crop_h == 256);

  Config typo = Config::from_string("train.epochz = 7\n");
  CHECK_THROWS_WITH_AS(train_config_from(typo),
                       doctest::Contains("unknown config key"), UsageError);

  Config bad_bins = Config::from_string("model.bins = 10\nmodel.timesteps = 4\n");
  CHECK_THROWS_AS(model_spec_from(bad_bins), UsageError);
}

}  // TEST_SUITE

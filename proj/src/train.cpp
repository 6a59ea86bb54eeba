#include "spikeflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "spikeflow/events.hpp"
#include "spikeflow/ops.hpp"

namespace fs = std::filesystem;

namespace spikeflow {

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "ssl") return LossMode::Ssl;
  if (s == "supervised") return LossMode::Supervised;
  throw UsageError("unknown loss mode: " + s + " (expected ssl|supervised)");
}

std::string to_string(LossMode m) {
  return m == LossMode::Ssl ? "ssl" : "supervised";
}

TrainConfig TrainConfig::defaults_for(LossMode mode) {
  TrainConfig cfg;
  cfg.loss_mode = mode;
  if (mode == LossMode::Supervised) {
    cfg.epochs = 50;
    cfg.lr_decay = 1.0;  // fixed learning rate
    cfg.lr_decay_every = 0;
    cfg.crop_h = 288;
    cfg.crop_w = 384;
    cfg.rot90 = false;  // supervised protocol: random flips and crop only
  }
  return cfg;
}

template <typename S>
Sample<S> sample_from_scene(const LoadedScene& scene, size_t bins) {
  EventVolume vol = build_event_volume(scene.stream, bins);
  GroupedInput grouped = group_former_latter(vol);
  Sample<S> s;
  s.frames = grouped.frames.template cast<S>();
  s.image_before = scene.image_before.template cast<S>();
  s.image_after = scene.image_after.template cast<S>();
  s.gt_flow = scene.gt_flow.template cast<S>();
  s.mask = event_mask(scene.stream).template cast<S>();
  return s;
}

template <typename S>
Tensor<S> frames_to_channels(const Tensor<S>& frames) {
  if (frames.rank() != 4 || frames.dim(1) != 4)
    throw UsageError("frames_to_channels: expected [T,4,H,W]");
  const size_t t_len = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  const size_t bins = 2 * t_len;
  Tensor<S> out({2 * bins, h, w});
  const size_t plane = h * w;
  for (size_t b = 0; b < bins; ++b) {
    // ON bins first, then OFF; former half comes from channels 0/1,
    // latter half from channels 2/3.
    const size_t t = b < t_len ? b : b - t_len;
    const size_t on_ch = b < t_len ? 0 : 2;
    std::copy(&frames.at(t, on_ch, 0, 0), &frames.at(t, on_ch, 0, 0) + plane,
              out.data() + b * plane);
    std::copy(&frames.at(t, on_ch + 1, 0, 0),
              &frames.at(t, on_ch + 1, 0, 0) + plane,
              out.data() + (bins + b) * plane);
  }
  return out;
}

namespace {

// Index map for one spatial transform step; used for every array of a
// sample so they stay aligned.
template <typename S>
Tensor<S> remap_hw(const Tensor<S>& in, size_t out_h, size_t out_w,
                   const std::function<std::pair<size_t, size_t>(
                       size_t, size_t)>& src_of) {
  std::vector<size_t> shape = in.shape();
  const size_t w_in = shape.back();
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  Tensor<S> out(shape);
  const size_t planes = in.numel() / (in.dim(in.rank() - 2) * w_in);
  const size_t in_plane = in.dim(in.rank() - 2) * w_in;
  const size_t out_plane = out_h * out_w;
  for (size_t p = 0; p < planes; ++p)
    for (size_t y = 0; y < out_h; ++y)
      for (size_t x = 0; x < out_w; ++x) {
        auto [sy, sx] = src_of(y, x);
        out[p * out_plane + y * out_w + x] = in[p * in_plane + sy * w_in + sx];
      }
  return out;
}

template <typename S>
void apply_spatial(Sample<S>& s, size_t out_h, size_t out_w,
                   const std::function<std::pair<size_t, size_t>(
                       size_t, size_t)>& src_of) {
  s.frames = remap_hw(s.frames, out_h, out_w, src_of);
  s.image_before = remap_hw(s.image_before, out_h, out_w, src_of);
  s.image_after = remap_hw(s.image_after, out_h, out_w, src_of);
  s.gt_flow = remap_hw(s.gt_flow, out_h, out_w, src_of);
  s.mask = remap_hw(s.mask, out_h, out_w, src_of);
}

}  // namespace

template <typename S>
Sample<S> augment(const Sample<S>& sample, const AugmentOps& ops) {
  Sample<S> s = sample;
  size_t h = s.image_before.dim(0), w = s.image_before.dim(1);

  if (ops.crop_h != 0 || ops.crop_w != 0) {
    if (ops.crop_y + ops.crop_h > h || ops.crop_x + ops.crop_w > w)
      throw UsageError("crop larger than input (" + std::to_string(ops.crop_h) +
                       "x" + std::to_string(ops.crop_w) + " at +" +
                       std::to_string(ops.crop_y) + "+" +
                       std::to_string(ops.crop_x) + " on " +
                       std::to_string(h) + "x" + std::to_string(w) + ")");
    const size_t y0 = ops.crop_y, x0 = ops.crop_x;
    apply_spatial(s, ops.crop_h, ops.crop_w,
                  [=](size_t y, size_t x) {
                    return std::pair<size_t, size_t>{y + y0, x + x0};
                  });
    h = ops.crop_h;
    w = ops.crop_w;
  }
  if (ops.flip_h) {
    apply_spatial(s, h, w, [=](size_t y, size_t x) {
      return std::pair<size_t, size_t>{y, w - 1 - x};
    });
    for (size_t i = 0; i < h * w; ++i) s.gt_flow[i] = -s.gt_flow[i];  // u
  }
  if (ops.flip_v) {
    apply_spatial(s, h, w, [=](size_t y, size_t x) {
      return std::pair<size_t, size_t>{h - 1 - y, x};
    });
    for (size_t i = h * w; i < 2 * h * w; ++i) s.gt_flow[i] = -s.gt_flow[i];
  }
  for (int k = 0; k < (ops.rot90 & 3); ++k) {
    // out[y][x] = in[x][W-1-y]; displacement (u,v) -> (v,-u)
    apply_spatial(s, w, h, [=](size_t y, size_t x) {
      return std::pair<size_t, size_t>{x, w - 1 - y};
    });
    std::swap(h, w);
    Tensor<S> rotated(s.gt_flow.shape());
    for (size_t i = 0; i < h * w; ++i) {
      rotated[i] = s.gt_flow[h * w + i];        // u' = v
      rotated[h * w + i] = -s.gt_flow[i];       // v' = -u
    }
    s.gt_flow = std::move(rotated);
  }
  return s;
}

AugmentOps draw_augment(const TrainConfig& cfg, size_t in_h, size_t in_w,
                        uint64_t epoch, uint64_t index) {
  Rng rng(Rng::mix(cfg.seed, 0xa76), Rng::mix(epoch, index));
  AugmentOps ops;
  if (cfg.crop_h != 0 && cfg.crop_w != 0 &&
      (cfg.crop_h != in_h || cfg.crop_w != in_w)) {
    if (cfg.crop_h > in_h || cfg.crop_w > in_w)
      throw UsageError("crop larger than input");
    ops.crop_h = cfg.crop_h;
    ops.crop_w = cfg.crop_w;
    ops.crop_y = size_t(rng.next_below(in_h - cfg.crop_h + 1));
    ops.crop_x = size_t(rng.next_below(in_w - cfg.crop_w + 1));
  }
  if (cfg.flip_h) ops.flip_h = rng.next_double() < 0.5;
  if (cfg.flip_v) ops.flip_v = rng.next_double() < 0.5;
  if (cfg.rot90) ops.rot90 = int(rng.next_below(4));
  return ops;
}

template <typename S>
void Adam<S>::init(const std::vector<NamedParam<S>>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.param->value.shape());
    v.emplace_back(p.param->value.shape());
  }
  step_count = 0;
}

template <typename S>
void Adam<S>::step(std::vector<NamedParam<S>>& params, double lr) {
  if (m.size() != params.size())
    throw UsageError("Adam state does not match parameter list");
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, double(step_count));
  const double bc2 = 1.0 - std::pow(beta2, double(step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter<S>& p = *params[i].param;
    for (size_t j = 0; j < p.value.numel(); ++j) {
      const double g = double(p.grad[j]);
      const double mi = beta1 * double(m[i][j]) + (1.0 - beta1) * g;
      const double vi = beta2 * double(v[i][j]) + (1.0 - beta2) * g * g;
      m[i][j] = S(mi);
      v[i][j] = S(vi);
      p.value[j] -= S(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
  }
}

namespace {

template <typename S>
std::string nonfinite_diagnostics(const ForwardResult<S>& result,
                                  const NetTrace<S>& trace) {
  std::ostringstream os;
  os << "non-finite loss; layer activity:";
  for (double a : result.activity) os << " " << a;
  double max_u = 0;
  for (const auto& layer : trace.layers)
    for (const auto& u : layer.u)
      max_u = std::max(max_u, double(u.abs_max()));
  os << "; max |u| = " << max_u;
  return os.str();
}

// Forward + loss + backward for one sample, accumulating into grads.
template <typename S>
double sample_loss_and_grads(const FlowNetwork<S>& net, const Sample<S>& sample,
                             const TrainConfig& cfg,
                             std::vector<Tensor<S>>* grads) {
  const bool spiking = net.spec().neuron == NeuronMode::Spiking;
  NetTrace<S> trace;
  Tensor<S> input =
      spiking ? sample.frames : frames_to_channels(sample.frames);
  ForwardResult<S> result = net.run(input, grads ? &trace : nullptr);

  const size_t h = result.flow.dim(1), w = result.flow.dim(2);
  Tensor<S> gflow(result.flow.shape());
  double loss = 0;
  if (cfg.loss_mode == LossMode::Supervised) {
    loss = double(supervised_loss(result.flow, sample.gt_flow,
                                  grads ? &gflow : nullptr));
  } else {
    LossConfig<S> lc{S(cfg.loss_alpha), S(cfg.charbonnier_r),
                     S(cfg.charbonnier_eta)};
    const S raw = total_ssl_loss(sample.image_before, sample.image_after,
                                 result.flow, lc, grads ? &gflow : nullptr);
    // Sums normalized by pixel count so the magnitude is crop-independent.
    const S norm = S(1) / S(h * w);
    loss = double(raw * norm);
    if (grads)
      for (size_t i = 0; i < gflow.numel(); ++i) gflow[i] *= norm;
  }
  if (!std::isfinite(loss))
    throw NumericError(nonfinite_diagnostics(result, trace));
  if (!grads) return loss;

  if (!cfg.multiscale || result.scale_flows.size() < 2) {
    net.backward(gflow, trace, *grads);
    return loss;
  }

  // Multi-scale supervision: each intermediate flow is upsampled to full
  // resolution, scored like the final flow at weight 0.25, and its gradient
  // pushed back down through the matching upsampling adjoints.
  std::vector<Tensor<S>> scale_grads(result.scale_flows.size());
  const double scale_weight = 0.25;
  for (size_t s = 0; s + 1 < result.scale_flows.size(); ++s) {
    Tensor<S> up = result.scale_flows[s];
    size_t levels = 0;
    while (up.dim(1) < h) {
      up = upsample_bilinear2x(up);
      ++levels;
    }
    Tensor<S> gup(up.shape());
    if (cfg.loss_mode == LossMode::Supervised) {
      loss += scale_weight * double(supervised_loss(up, sample.gt_flow, &gup));
    } else {
      LossConfig<S> lc{S(cfg.loss_alpha), S(cfg.charbonnier_r),
                       S(cfg.charbonnier_eta)};
      Tensor<S> g2(up.shape());
      const S raw = total_ssl_loss(sample.image_before, sample.image_after, up,
                                   lc, &g2);
      loss += scale_weight * double(raw) / double(h * w);
      for (size_t i = 0; i < gup.numel(); ++i)
        gup[i] = g2[i] / S(h * w);
    }
    for (size_t i = 0; i < gup.numel(); ++i) gup[i] *= S(scale_weight);
    for (size_t lvl = 0; lvl < levels; ++lvl) {
      Tensor<S> down({gup.dim(0), gup.dim(1) / 2, gup.dim(2) / 2});
      upsample_bilinear2x_backward(gup, down);
      gup = std::move(down);
    }
    scale_grads[s] = std::move(gup);
  }
  net.backward(gflow, trace, *grads, &scale_grads);
  return loss;
}

template <typename S>
void zero_param_grads(FlowNetwork<S>& net) {
  for (auto& p : net.parameters()) p.param->zero_grad();
}

}  // namespace

template <typename S>
StepStats train_step(FlowNetwork<S>& net, const std::vector<Sample<S>>& batch,
                     const TrainConfig& cfg, Adam<S>& opt, double lr) {
  if (batch.empty()) throw UsageError("train_step: empty batch");
  const size_t n = batch.size();
  std::vector<std::vector<Tensor<S>>> stores(n);
  std::vector<double> losses(n, 0.0);

  const int workers = int(std::min<size_t>(size_t(max_workers()), n));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  auto work = [&](int wi) {
    try {
      for (size_t i = size_t(wi); i < n; i += size_t(workers)) {
        stores[i] = net.make_grad_store();
        losses[i] = sample_loss_and_grads(net, batch[i], cfg, &stores[i]);
      }
    } catch (...) {
      errors[size_t(wi)] = std::current_exception();
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int wi = 0; wi < workers; ++wi) pool.emplace_back(work, wi);
    for (auto& th : pool) th.join();
  }
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);

  // Batch gradient is the plain sum over samples, reduced in sample order.
  zero_param_grads(net);
  for (size_t i = 0; i < n; ++i) net.accumulate_grads(stores[i]);

  auto params = net.parameters();
  if (cfg.grad_clip > 0) {
    double sq = 0;
    for (auto& p : params)
      for (size_t j = 0; j < p.param->grad.numel(); ++j)
        sq += double(p.param->grad[j]) * double(p.param->grad[j]);
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      const S k = S(cfg.grad_clip / norm);
      for (auto& p : params)
        for (size_t j = 0; j < p.param->grad.numel(); ++j)
          p.param->grad[j] *= k;
    }
  }
  opt.step(params, lr);
  net.apply_param_floors();

  double total = 0;
  for (double l : losses) total += l;
  return {total / double(n), n};
}

template <typename S>
EvalResult evaluate(const FlowNetwork<S>& net,
                    const std::vector<Sample<S>>& samples) {
  if (samples.empty()) throw UsageError("evaluate: no samples");
  const bool spiking = net.spec().neuron == NeuronMode::Spiking;
  EvalResult r;
  for (const Sample<S>& s : samples) {
    Tensor<S> input = spiking ? s.frames : frames_to_channels(s.frames);
    ForwardResult<S> result = net.run(input, nullptr);
    Tensor<double> flow = result.flow.template cast<double>();
    Tensor<double> gt = s.gt_flow.template cast<double>();
    Tensor<double> mask = s.mask.template cast<double>();
    if (mask.sum() == 0.0) continue;  // a static scene has no event pixels
    r.aee += aee(flow, gt, mask);
    r.pe1 += npe(flow, gt, mask, 1.0);
    r.pe2 += npe(flow, gt, mask, 2.0);
    r.pe3 += npe(flow, gt, mask, 3.0);
    ++r.samples;
  }
  if (r.samples == 0) throw DataError("empty mask");
  r.aee /= double(r.samples);
  r.pe1 /= double(r.samples);
  r.pe2 /= double(r.samples);
  r.pe3 /= double(r.samples);
  return r;
}

template <typename S>
std::vector<double> mean_activity(const FlowNetwork<S>& net,
                                  const std::vector<Sample<S>>& samples) {
  if (net.spec().neuron != NeuronMode::Spiking)
    throw UsageError("activity undefined for an analog network");
  if (samples.empty()) throw UsageError("mean_activity: no samples");
  std::vector<double> acc(net.neuron_layer_count(), 0.0);
  for (const Sample<S>& s : samples) {
    ForwardResult<S> result = net.forward(s.frames, nullptr);
    for (size_t l = 0; l < acc.size(); ++l) acc[l] += result.activity[l];
  }
  for (double& a : acc) a /= double(samples.size());
  return acc;
}

double schedule_lr(const TrainConfig& cfg, size_t epoch) {
  if (cfg.lr_decay_every == 0 || cfg.lr_decay == 1.0) return cfg.lr;
  return cfg.lr * std::pow(cfg.lr_decay, double(epoch / cfg.lr_decay_every));
}

template <typename S>
FitResult fit(FlowNetwork<S>& net, std::vector<Sample<S>> dataset,
              const TrainConfig& cfg, const std::string& out_dir,
              Adam<S>* opt_in, size_t start_epoch, const FitHooks<S>* hooks) {
  if (dataset.empty()) throw DataError("empty dataset");
  if (cfg.loss_mode == LossMode::Supervised) {
    bool any = false;
    for (const auto& s : dataset)
      if (s.gt_flow.abs_max() != S(0)) any = true;
    if (!any) throw DataError("supervised mode requires ground-truth flow");
  }

  size_t n_val = 0;
  if (cfg.val_fraction > 0 && dataset.size() >= 2)
    n_val = std::min<size_t>(
        std::max<size_t>(1, size_t(std::llround(cfg.val_fraction *
                                                double(dataset.size())))),
        dataset.size() - 1);
  std::vector<Sample<S>> val(dataset.end() - long(n_val), dataset.end());
  dataset.resize(dataset.size() - n_val);
  const std::vector<Sample<S>>& eval_set = n_val ? val : dataset;

  Adam<S> local_opt;
  Adam<S>& opt = opt_in ? *opt_in : local_opt;
  if (opt.m.empty()) opt.init(net.parameters());

  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open(out_dir + "/train_log.txt", std::ios::app);
  }

  FitResult result;
  result.initial_val_aee = evaluate(net, eval_set).aee;

  for (size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = schedule_lr(cfg, epoch);
    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::mix(cfg.seed, 0x5f1e), epoch);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(shuffle_rng.next_below(i))]);

    double loss_sum = 0;
    size_t seen = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch) {
      const size_t bn = std::min(cfg.batch, order.size() - at);
      std::vector<Sample<S>> batch;
      batch.reserve(bn);
      for (size_t k = 0; k < bn; ++k) {
        const size_t idx = order[at + k];
        const Sample<S>& raw = dataset[idx];
        batch.push_back(augment(
            raw, draw_augment(cfg, raw.image_before.dim(0),
                              raw.image_before.dim(1), epoch, idx)));
      }
      StepStats stats = train_step(net, batch, cfg, opt, lr);
      loss_sum += stats.loss * double(stats.samples);
      seen += stats.samples;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = seen ? loss_sum / double(seen) : 0.0;
    rec.val_aee = evaluate(net, eval_set).aee;
    if (net.spec().neuron == NeuronMode::Spiking) {
      rec.activity = mean_activity(net, eval_set);
      for (const auto& u : net.units())
        if (u.has_neuron) {
          rec.v_th.push_back(double(u.v_th.value[0]));
          rec.leak.push_back(double(u.leak.value[0]));
        }
    }
    result.records.push_back(rec);
    result.epochs_run = epoch + 1 - start_epoch;

    if (log.is_open()) {
      log << "epoch=" << epoch << " lr=" << lr << " loss=" << rec.train_loss
          << " val_aee=" << rec.val_aee;
      if (!rec.activity.empty()) {
        log << " activity=";
        for (size_t l = 0; l < rec.activity.size(); ++l)
          log << (l ? "," : "") << rec.activity[l];
        log << " v_th=";
        for (size_t l = 0; l < rec.v_th.size(); ++l)
          log << (l ? "," : "") << rec.v_th[l];
        log << " leak=";
        for (size_t l = 0; l < rec.leak.size(); ++l)
          log << (l ? "," : "") << rec.leak[l];
      }
      log << "\n" << std::flush;
    }

    if (!out_dir.empty() && cfg.checkpoint_every != 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_epoch%04zu.ckpt",
                    epoch + 1);
      save_checkpoint(net, opt, cfg, epoch + 1, out_dir + "/" + name);
    }
    if (hooks && hooks->on_epoch && !hooks->on_epoch(rec)) break;
    if (cfg.early_stop_aee > 0 && rec.val_aee <= cfg.early_stop_aee) break;
  }

  result.final_val_aee = result.records.empty()
                             ? result.initial_val_aee
                             : result.records.back().val_aee;
  if (!out_dir.empty()) {
    const size_t next_epoch =
        result.records.empty() ? start_epoch : result.records.back().epoch + 1;
    save_checkpoint(net, opt, cfg, next_epoch, out_dir + "/checkpoint.ckpt");
  }
  return result;
}

template <typename S>
void save_checkpoint(FlowNetwork<S>& net, const Adam<S>& opt,
                     const TrainConfig& cfg, size_t next_epoch,
                     const std::string& path) {
  Snapshot snap;
  manifest_from_spec(net.spec(), net.seed(), snap);
  snap.manifest_set("train.next_epoch", std::to_string(next_epoch));
  snap.manifest_set("train.seed", std::to_string(cfg.seed));
  snap.manifest_set("train.rng", "counter(seed,epoch,index)");
  snap.manifest_set("train.precision",
                    cfg.precision == Precision::F32 ? "f32" : "f64");
  snap.manifest_set("adam.step_count", std::to_string(opt.step_count));
  net.save_params(snap);
  auto params = net.parameters();
  if (!opt.m.empty()) {
    if (opt.m.size() != params.size())
      throw UsageError("save_checkpoint: optimizer state arity mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
      snap.put("adam.m." + params[i].name, opt.m[i]);
      snap.put("adam.v." + params[i].name, opt.v[i]);
    }
  }
  snap.save(path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  Snapshot snap = Snapshot::load(path);
  CheckpointInfo info;
  info.spec = spec_from_manifest(snap);
  info.seed = std::stoull(snap.manifest_get_or("model.seed", "0"));
  info.next_epoch = std::stoul(snap.manifest_get_or("train.next_epoch", "0"));
  info.precision = snap.manifest_get_or("train.precision", "f32") == "f64"
                       ? Precision::F64
                       : Precision::F32;
  return info;
}

template <typename S>
void load_checkpoint(const std::string& path, FlowNetwork<S>& net,
                     Adam<S>* opt) {
  Snapshot snap = Snapshot::load(path);
  net.load_params(snap);
  if (opt) {
    auto params = net.parameters();
    opt->init(params);
    opt->step_count = std::stoull(snap.manifest_get_or("adam.step_count", "0"));
    for (size_t i = 0; i < params.size(); ++i) {
      if (!snap.has("adam.m." + params[i].name)) continue;
      opt->m[i] = snap.get<S>("adam.m." + params[i].name);
      opt->v[i] = snap.get<S>("adam.v." + params[i].name);
    }
  }
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "model.kind", "model.base_channels", "model.neuron", "model.timesteps",
      "model.flow_scale", "model.bins", "model.reset", "model.init_v_th",
      "model.init_leak", "model.gamma", "train.epochs", "train.batch",
      "train.lr", "train.lr_decay", "train.lr_decay_every", "train.crop_h",
      "train.crop_w", "train.flip_h", "train.flip_v", "train.rot90",
      "train.val_fraction", "train.checkpoint_every", "train.early_stop_aee",
      "train.grad_clip", "train.multiscale", "loss.mode", "loss.alpha",
      "loss.charbonnier_r", "loss.charbonnier_eta", "seed", "precision"};
  return keys;
}

TrainConfig train_config_from(const Config& cfg) {
  cfg.require_known(known_config_keys());
  const LossMode mode = loss_mode_from_string(cfg.get("loss.mode", "ssl"));
  TrainConfig tc = TrainConfig::defaults_for(mode);
  tc.epochs = cfg.get_size("train.epochs", tc.epochs);
  tc.batch = cfg.get_size("train.batch", tc.batch);
  if (tc.batch == 0) throw UsageError("train.batch must be >= 1");
  tc.lr = cfg.get_double("train.lr", tc.lr);
  tc.lr_decay = cfg.get_double("train.lr_decay", tc.lr_decay);
  tc.lr_decay_every = cfg.get_size("train.lr_decay_every", tc.lr_decay_every);
  tc.crop_h = cfg.get_size("train.crop_h", tc.crop_h);
  tc.crop_w = cfg.get_size("train.crop_w", tc.crop_w);
  tc.flip_h = cfg.get_bool("train.flip_h", tc.flip_h);
  tc.flip_v = cfg.get_bool("train.flip_v", tc.flip_v);
  tc.rot90 = cfg.get_bool("train.rot90", tc.rot90);
  tc.val_fraction = cfg.get_double("train.val_fraction", tc.val_fraction);
  tc.checkpoint_every =
      cfg.get_size("train.checkpoint_every", tc.checkpoint_every);
  tc.early_stop_aee = cfg.get_double("train.early_stop_aee", tc.early_stop_aee);
  tc.grad_clip = cfg.get_double("train.grad_clip", tc.grad_clip);
  tc.multiscale = cfg.get_bool("train.multiscale", tc.multiscale);
  tc.loss_alpha = cfg.get_double("loss.alpha", tc.loss_alpha);
  tc.charbonnier_r = cfg.get_double("loss.charbonnier_r", tc.charbonnier_r);
  tc.charbonnier_eta =
      cfg.get_double("loss.charbonnier_eta", tc.charbonnier_eta);
  tc.seed = cfg.get_u64("seed", tc.seed);
  const std::string prec = cfg.get("precision", "f32");
  if (prec == "f32")
    tc.precision = Precision::F32;
  else if (prec == "f64")
    tc.precision = Precision::F64;
  else
    throw UsageError("precision must be f32 or f64, got " + prec);
  return tc;
}

ModelSpec model_spec_from(const Config& cfg) {
  ModelSpec spec;
  spec.kind = model_kind_from_string(cfg.get("model.kind", "unet"));
  spec.base_channels = cfg.get_size("model.base_channels", 8);
  spec.neuron = neuron_mode_from_string(cfg.get("model.neuron", "spiking"));
  spec.timesteps = cfg.get_size("model.timesteps", 5);
  spec.flow_scale = cfg.get_double("model.flow_scale", 40.0);
  spec.bins = cfg.get_size("model.bins", 10);
  const std::string reset = cfg.get("model.reset", "soft");
  if (reset == "soft")
    spec.reset = ResetMode::Soft;
  else if (reset == "hard")
    spec.reset = ResetMode::Hard;
  else
    throw UsageError("model.reset must be soft or hard");
  spec.init_v_th = cfg.get_double("model.init_v_th", 1.0);
  spec.init_leak = cfg.get_double("model.init_leak", 1.0);
  spec.gamma = cfg.get_double("model.gamma", 10.0);
  if (spec.bins % 2 != 0 || spec.bins < 2)
    throw UsageError("model.bins must be even and >= 2");
  if (spec.timesteps != spec.bins / 2)
    throw UsageError("model.timesteps must equal model.bins / 2");
  return spec;
}

#define SPIKEFLOW_INSTANTIATE_TRAIN(S)                                         \
  template Sample<S> sample_from_scene<S>(const LoadedScene&, size_t);         \
  template Tensor<S> frames_to_channels<S>(const Tensor<S>&);                  \
  template Sample<S> augment<S>(const Sample<S>&, const AugmentOps&);          \
  template struct Adam<S>;                                                     \
  template StepStats train_step<S>(FlowNetwork<S>&,                            \
                                   const std::vector<Sample<S>>&,              \
                                   const TrainConfig&, Adam<S>&, double);      \
  template EvalResult evaluate<S>(const FlowNetwork<S>&,                       \
                                  const std::vector<Sample<S>>&);              \
  template std::vector<double> mean_activity<S>(                               \
      const FlowNetwork<S>&, const std::vector<Sample<S>>&);                   \
  template FitResult fit<S>(FlowNetwork<S>&, std::vector<Sample<S>>,           \
                            const TrainConfig&, const std::string&, Adam<S>*,  \
                            size_t, const FitHooks<S>*);                       \
  template void save_checkpoint<S>(FlowNetwork<S>&, const Adam<S>&,            \
                                   const TrainConfig&, size_t,                 \
                                   const std::string&);                        \
  template void load_checkpoint<S>(const std::string&, FlowNetwork<S>&,        \
                                   Adam<S>*);

SPIKEFLOW_INSTANTIATE_TRAIN(float)
SPIKEFLOW_INSTANTIATE_TRAIN(double)

}  // namespace spikeflow

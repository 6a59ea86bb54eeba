#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "spikeflow/config.hpp"
#include "spikeflow/events.hpp"
#include "spikeflow/io.hpp"
#include "spikeflow/model.hpp"
#include "spikeflow/objectives.hpp"
#include "spikeflow/profile.hpp"
#include "spikeflow/synth.hpp"
#include "spikeflow/train.hpp"

namespace fs = std::filesystem;
using namespace spikeflow;

namespace {

void echo_config(const Config& cfg) {
  for (const auto& [k, v] : cfg.values())
    std::cout << "config." << k << "=" << v << "\n";
}

template <typename S>
std::vector<Sample<S>> load_dataset(const std::string& data_dir, size_t bins) {
  std::vector<Sample<S>> samples;
  for (const std::string& dir : list_scenes(data_dir))
    samples.push_back(sample_from_scene<S>(load_scene(dir), bins));
  return samples;
}

int cmd_synth(const std::string& pattern, double vx, double vy, double omega,
              size_t size_h, size_t size_w, double rate, double theta,
              uint64_t seed, size_t count, const std::string& out) {
  if (count == 1) {
    SceneParams p;
    p.pattern = pattern;
    p.vx = vx;
    p.vy = vy;
    p.omega_deg = omega;
    p.height = size_h;
    p.width = size_w;
    p.rate = rate;
    p.theta = theta;
    p.seed = seed;
    SynthScene scene = synth_scene(p);
    if (scene.stream.events.empty())
      std::cout << "warning: empty stream (static or sub-threshold scene)\n";
    write_scene(scene, out);
    std::cout << "events=" << scene.stream.events.size() << "\n";
    return 0;
  }
  DatasetSpec spec;
  spec.count = count;
  spec.height = size_h;
  spec.width = size_w;
  spec.theta = theta;
  spec.rate = rate;
  spec.seed = seed;
  spec.max_speed = std::max(2.0, double(std::min(size_h, size_w)) / 16.0);
  write_dataset(spec, out);
  size_t total = 0;
  for (const std::string& dir : list_scenes(out))
    total += read_events(dir + "/events.evt1").events.size();
  std::cout << "scenes=" << count << "\n" << "events=" << total << "\n";
  return 0;
}

template <typename S>
int run_train(const Config& cfg, const std::string& data,
              const std::string& out) {
  TrainConfig tc = train_config_from(cfg);
  ModelSpec spec = model_spec_from(cfg);
  auto dataset = load_dataset<S>(data, spec.bins);
  FlowNetwork<S> net(spec, tc.seed);
  std::cout << "params=" << net.param_count() << "\n";
  FitResult result = fit(net, std::move(dataset), tc, out);
  std::cout << "initial_val_aee=" << result.initial_val_aee << "\n";
  std::cout << "final_val_aee=" << result.final_val_aee << "\n";
  std::cout << "epochs_run=" << result.epochs_run << "\n";
  std::cout << "checkpoint=" << out << "/checkpoint.ckpt" << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out) {
  Config cfg = config_path.empty() ? Config()
                                   : Config::from_file(config_path);
  cfg.require_known(known_config_keys());
  echo_config(cfg);
  if (cfg.get("precision", "f32") == "f64")
    return run_train<double>(cfg, data, out);
  return run_train<float>(cfg, data, out);
}

template <typename S>
int run_eval(const CheckpointInfo& info, const std::string& checkpoint,
             const std::string& data, const std::string& json_out) {
  FlowNetwork<S> net(info.spec, info.seed);
  load_checkpoint<S>(checkpoint, net, nullptr);
  auto samples = load_dataset<S>(data, info.spec.bins);
  EvalResult r = evaluate(net, samples);
  std::cout << "samples=" << r.samples << "\n";
  std::cout << "aee=" << r.aee << "\n";
  std::cout << "1pe=" << r.pe1 << "\n";
  std::cout << "2pe=" << r.pe2 << "\n";
  std::cout << "3pe=" << r.pe3 << "\n";
  if (!json_out.empty()) {
    std::ofstream js(json_out, std::ios::trunc);
    js << "{\"samples\":" << r.samples << ",\"aee\":" << r.aee
       << ",\"1pe\":" << r.pe1 << ",\"2pe\":" << r.pe2 << ",\"3pe\":" << r.pe3
       << "}\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data,
             const std::string& json_out) {
  CheckpointInfo info = read_checkpoint_info(checkpoint);
  std::cout << "config.model.kind=" << to_string(info.spec.kind) << "\n";
  std::cout << "config.model.neuron=" << to_string(info.spec.neuron) << "\n";
  if (info.precision == Precision::F64)
    return run_eval<double>(info, checkpoint, data, json_out);
  return run_eval<float>(info, checkpoint, data, json_out);
}

template <typename S>
int run_profile(const CheckpointInfo& info, const std::string& checkpoint,
                const std::string& data, const std::string& json_out) {
  FlowNetwork<S> net(info.spec, info.seed);
  load_checkpoint<S>(checkpoint, net, nullptr);
  auto samples = load_dataset<S>(data, info.spec.bins);
  const bool spiking = info.spec.neuron == NeuronMode::Spiking;
  const std::string label = to_string(info.spec.kind) + "-" +
                            (spiking ? "snn" : "ann");
  EnergyReport report;
  if (spiking) {
    report = profile_network(net, samples);
  } else {
    const size_t h = samples[0].image_before.dim(0);
    const size_t w = samples[0].image_before.dim(1);
    double ops_ann = 0;
    for (const LayerInfo& li : net.layer_infos(h, w))
      ops_ann += double(li.out_channels * li.out_h * li.out_w) *
                 double(li.in_channels * li.kernel * li.kernel);
    report = energy(0.0, ops_ann);
    report.params = net.param_count();
  }
  std::cout << format_report(report, label, spiking);
  if (!json_out.empty()) {
    std::ofstream js(json_out, std::ios::trunc);
    js << report_json(report, label, spiking) << "\n";
  }
  return 0;
}

int cmd_profile(const std::string& checkpoint, const std::string& data,
                const std::string& json_out) {
  CheckpointInfo info = read_checkpoint_info(checkpoint);
  if (info.precision == Precision::F64)
    return run_profile<double>(info, checkpoint, data, json_out);
  return run_profile<float>(info, checkpoint, data, json_out);
}

int cmd_viz(const std::string& flow_path, const std::string& out,
            double flow_scale) {
  FlowField flow = read_flo(flow_path);
  write_ppm(flow_to_color(flow, flow_scale), out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikeflow: event-camera optical flow with spiking networks"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic event scenes");
  std::string pattern = "checker", out_dir;
  double vx = 2.0, vy = 0.0, omega = 0.0, rate = 64.0, theta = 0.25;
  std::vector<size_t> size_hw = {64, 64};
  uint64_t seed = 0;
  size_t count = 1;
  synth->add_option("--pattern", pattern,
                    "pattern: bar|checker|blobs|noise|disk");
  synth->add_option("--vx", vx, "x velocity, px/interval");
  synth->add_option("--vy", vy, "y velocity, px/interval");
  synth->add_option("--rotate", omega, "rotation, degrees/interval");
  synth->add_option("--size", size_hw, "height width")->expected(2);
  synth->add_option("--rate", rate, "integrator samples per interval");
  synth->add_option("--theta", theta, "log-intensity contrast threshold");
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--count", count, "scene count (>1 writes a dataset)");
  synth->add_option("--out", out_dir, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string config_path, data_dir, train_out;
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt, eval_json;
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--json", eval_json, "also write a JSON record here");

  // profile
  auto* profile = app.add_subcommand("profile",
                                     "operation counts and energy model");
  std::string prof_json;
  profile->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  profile->add_option("--data", data_dir, "dataset directory")->required();
  profile->add_option("--json", prof_json, "also write a JSON record here");

  // viz
  auto* viz = app.add_subcommand("viz", "render a flow file as a color map");
  std::string flow_path, viz_out;
  double viz_scale = 40.0;
  viz->add_option("--flow", flow_path, "FLO1 flow file")->required();
  viz->add_option("--out", viz_out, "output PPM image")->required();
  viz->add_option("--flow-scale", viz_scale, "magnitude normalization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth(pattern, vx, vy, omega, size_hw[0], size_hw[1], rate,
                       theta, seed, count, out_dir);
    if (train->parsed()) return cmd_train(config_path, data_dir, train_out);
    if (eval->parsed()) return cmd_eval(ckpt, data_dir, eval_json);
    if (profile->parsed()) return cmd_profile(ckpt, data_dir, prof_json);
    if (viz->parsed()) return cmd_viz(flow_path, viz_out, viz_scale);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

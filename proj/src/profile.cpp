#include "spikeflow/profile.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace spikeflow {

template <typename S>
std::vector<double> measure_activity(const FlowNetwork<S>& net,
                                     const std::vector<Sample<S>>& samples) {
  return mean_activity(net, samples);  // throws on analog networks
}

OpsCount count_ops(const std::vector<LayerProfile>& profiles,
                   size_t timesteps) {
  OpsCount ops;
  for (const LayerProfile& p : profiles) {
    ops.ops_ann += p.neurons * p.connections;
    if (p.spike_input)
      ops.ops_snn += p.neurons * p.connections * p.firing;
    else
      ops.ops_mac_extra += p.neurons * p.connections;
  }
  ops.ops_snn *= double(timesteps);
  ops.ops_mac_extra *= double(timesteps);
  return ops;
}

EnergyReport energy(double ops_snn, double ops_ann) {
  if (ops_snn < 0 || ops_ann < 0) throw UsageError("op counts must be >= 0");
  EnergyReport r;
  r.ops_snn = ops_snn;
  r.ops_ann = ops_ann;
  r.e_snn_mj = ops_snn * kEnergyAcPj / 1e9;  // pJ -> mJ
  r.e_ann_mj = ops_ann * kEnergyMacPj / 1e9;
  r.improvement = r.e_snn_mj > 0 ? r.e_ann_mj / r.e_snn_mj : 0.0;
  return r;
}

template <typename S>
EnergyReport profile_network(const FlowNetwork<S>& net,
                             const std::vector<Sample<S>>& samples) {
  if (samples.empty()) throw UsageError("profile_network: no samples");
  const size_t h = samples[0].image_before.dim(0);
  const size_t w = samples[0].image_before.dim(1);
  const size_t t_len = net.spec().timesteps;

  std::vector<double> activity = measure_activity(net, samples);
  std::vector<LayerInfo> infos = net.layer_infos(h, w);
  std::vector<LayerProfile> profiles;
  for (size_t i = 0; i < infos.size(); ++i) {
    const LayerInfo& li = infos[i];
    LayerProfile p;
    p.name = li.name;
    p.neurons = double(li.out_channels * li.out_h * li.out_w);
    p.connections = double(li.in_channels * li.kernel * li.kernel);
    // The first layer integrates analog voxel currents and the flow heads
    // feed the accumulator; both are MAC work, not spike-driven ACs.
    p.spike_input = li.neuron && li.spike_input;
    p.firing = li.neuron && i < activity.size() ? activity[i] : 1.0;
    profiles.push_back(p);
  }
  OpsCount ops = count_ops(profiles, t_len);

  // The matched analog network sees all bins as channels in one pass.
  ModelSpec analog_spec = net.spec();
  analog_spec.neuron = NeuronMode::Analog;
  FlowNetwork<S> analog(analog_spec, net.seed());
  double ops_ann = 0;
  for (const LayerInfo& li : analog.layer_infos(h, w))
    ops_ann += double(li.out_channels * li.out_h * li.out_w) *
               double(li.in_channels * li.kernel * li.kernel);

  EnergyReport report = energy(ops.ops_snn, ops_ann);
  report.params = net.param_count();
  report.ops_mac_extra = ops.ops_mac_extra;
  double fsum = 0;
  double neurons = 0;
  for (size_t i = 0; i < infos.size(); ++i) {
    if (!infos[i].neuron) continue;
    const double m = double(infos[i].out_channels * infos[i].out_h *
                            infos[i].out_w);
    fsum += activity[i] * m;
    neurons += m;
  }
  report.activity_pct = neurons > 0 ? 100.0 * fsum / neurons : 0.0;
  return report;
}

std::string format_report(const EnergyReport& r, const std::string& label,
                          bool spiking) {
  std::ostringstream os;
  os << "model=" << label << "\n";
  os << "params_x1e6=" << r.params / 1e6 << "\n";
  os << "ops_ann_x1e9=" << r.ops_ann / 1e9 << "\n";
  if (spiking) {
    os << "avg_spiking_activity_pct=" << r.activity_pct << "\n";
    os << "ops_snn_x1e9=" << r.ops_snn / 1e9 << "\n";
    os << "ops_mac_extra_x1e9=" << r.ops_mac_extra / 1e9 << "\n";
    os << "e_total_mj=" << r.e_snn_mj << "\n";
    os << "improvement_x=" << r.improvement << "\n";
  } else {
    os << "avg_spiking_activity_pct=n/a\n";
    os << "ops_snn_x1e9=n/a\n";
    os << "ops_mac_extra_x1e9=n/a\n";
    os << "e_total_mj=" << r.e_ann_mj << "\n";
    os << "improvement_x=1\n";
  }
  return os.str();
}

std::string report_json(const EnergyReport& r, const std::string& label,
                        bool spiking) {
  nlohmann::json j;
  j["model"] = label;
  j["params"] = r.params;
  j["ops_ann"] = r.ops_ann;
  if (spiking) {
    j["ops_snn"] = r.ops_snn;
    j["ops_mac_extra"] = r.ops_mac_extra;
    j["avg_spiking_activity_pct"] = r.activity_pct;
    j["e_total_mj"] = r.e_snn_mj;
    j["improvement_x"] = r.improvement;
  } else {
    j["e_total_mj"] = r.e_ann_mj;
  }
  j["e_mac_pj"] = kEnergyMacPj;
  j["e_ac_pj"] = kEnergyAcPj;
  return j.dump();
}

template std::vector<double> measure_activity<float>(
    const FlowNetwork<float>&, const std::vector<Sample<float>>&);
template std::vector<double> measure_activity<double>(
    const FlowNetwork<double>&, const std::vector<Sample<double>>&);
template EnergyReport profile_network<float>(const FlowNetwork<float>&,
                                             const std::vector<Sample<float>>&);
template EnergyReport profile_network<double>(
    const FlowNetwork<double>&, const std::vector<Sample<double>>&);

}  // namespace spikeflow

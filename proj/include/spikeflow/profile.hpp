#pragma once

#include <string>
#include <vector>

#include "spikeflow/model.hpp"
#include "spikeflow/train.hpp"

namespace spikeflow {

// 32-bit float op energies in 45nm CMOS, picojoules.
constexpr double kEnergyMacPj = 4.6;
constexpr double kEnergyAcPj = 0.9;

// Per-layer quantities of the synaptic-operation model: M neurons,
// C connections per neuron (kernel volume x input channels), measured mean
// firing activity F in spikes per neuron per timestep.
struct LayerProfile {
  std::string name;
  double neurons = 0;      // M
  double connections = 0;  // C
  double firing = 0;       // F
  bool spike_input = true; // false: analog-driven (counted as MAC)
};

struct OpsCount {
  double ops_snn = 0;        // T * sum(M C F) over spike-driven layers
  double ops_ann = 0;        // sum(M C)
  double ops_mac_extra = 0;  // analog-input front end + flow heads, per pass
};

struct EnergyReport {
  size_t params = 0;
  double ops_ann = 0;
  double ops_snn = 0;
  double ops_mac_extra = 0;
  double activity_pct = 0;  // spikes per neuron per timestep, percent
  double e_snn_mj = 0;
  double e_ann_mj = 0;
  double improvement = 0;   // e_ann / e_snn
};

// Mean firing activity per LIF layer over samples, timesteps, and neurons.
// Errors on analog networks ("activity undefined").
template <typename S>
std::vector<double> measure_activity(const FlowNetwork<S>& net,
                                     const std::vector<Sample<S>>& samples);

// Eq. of the operation model on explicit profiles: ops_snn counts only
// spike-driven layers; ops_ann counts every profile.
OpsCount count_ops(const std::vector<LayerProfile>& profiles, size_t timesteps);

// Energy from op counts alone; the AC:MAC ratio is fixed by the constants.
EnergyReport energy(double ops_snn, double ops_ann);

// Full report for a spiking network: profiles built from the network
// geometry at the samples' resolution, activity measured on the samples,
// ops_ann taken from the matched analog topology.
template <typename S>
EnergyReport profile_network(const FlowNetwork<S>& net,
                             const std::vector<Sample<S>>& samples);

// Table-2 style rendering: params(x1e6), OPS_ANN(x1e9), activity(%),
// OPS_SNN(x1e9), E_total(mJ), improvement(x).
std::string format_report(const EnergyReport& report, const std::string& label,
                          bool spiking);

std::string report_json(const EnergyReport& report, const std::string& label,
                        bool spiking);

}  // namespace spikeflow

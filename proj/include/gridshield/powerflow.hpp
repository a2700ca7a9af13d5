#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridshield/grid_model.hpp"

namespace gridshield::powerflow {

// Rectangular bus voltages, ordered like GridCase::buses. Slack imaginary
// part is zero for ground-truth states.
struct StateVector {
    Eigen::VectorXd v_real;
    Eigen::VectorXd v_imag;

    int size() const { return static_cast<int>(v_real.size()); }
    std::complex<double> at(int i) const { return {v_real[i], v_imag[i]}; }
};

// RMSE over the complex state: sqrt(sum_i |v_pred_i - v_true_i|^2).
double state_rmse(const StateVector& pred, const StateVector& truth);

struct LoadSet {
    Eigen::VectorXd p;  // per bus, p.u.
    Eigen::VectorXd q;
};

LoadSet case_loads(const grid::GridCase& grid);
LoadSet scale_loads(const LoadSet& loads, double factor);

struct PowerflowOptions {
    int max_iterations = 20;
    double tolerance = 1e-11;  // max |mismatch| p.u.
    bool flat_start = true;    // falls back to the stored operating point on failure
};

StateVector solve_powerflow(const grid::GridCase& grid, const grid::Topology& topo,
                            const LoadSet& loads, const PowerflowOptions& opts = {});

struct LoadProfileConfig {
    double amplitude = 0.02;
    double period_ticks = 300.0;
    double noise_sigma = 0.005;
    double clip_lo = 0.7;
    double clip_hi = 1.3;
};

struct ScenarioConfig {
    int ticks = 600;
    uint64_t seed = 1;
    int topology_change_every = 60;  // 0 disables regular changes
    double irregular_rate = 0.01;    // expected 1-tick line openings per tick
    LoadProfileConfig profile;
    double x_sw = 1e-4;  // ground truth is solved with this switch reactance in series
    int max_resample = 100;
    int threads = 0;  // 0 = decide from GRIDSHIELD_THREADS / hardware
};

enum class AnomalyKind { none, bad_data, topology_error, fdia };

std::string anomaly_kind_name(AnomalyKind k);
AnomalyKind anomaly_kind_from_name(const std::string& s);

struct AnomalyGroundTruth {
    int tick = 0;
    AnomalyKind kind = AnomalyKind::none;
    std::vector<std::string> bad_data_locations;  // channel ids
    std::vector<int> flipped_branches;
    double fdia_load_factor = 1.0;
};

struct TopologyEvent {
    int tick = 0;
    bool regular = false;  // false = 1-tick forced outage
    std::vector<int> opened;
    std::vector<int> closed;
};

struct ScenarioTick {
    grid::Topology topology;
    LoadSet loads;
    StateVector true_state;
    AnomalyGroundTruth anomaly;  // filled by the measurement harness
};

struct ScenarioTrace {
    std::string case_name;
    ScenarioConfig config;
    std::vector<ScenarioTick> ticks;
    std::vector<TopologyEvent> action_log;
};

ScenarioTrace generate_scenario(const grid::GridCase& grid, const ScenarioConfig& config);

}  // namespace gridshield::powerflow

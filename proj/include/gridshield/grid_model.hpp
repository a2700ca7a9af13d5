#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace gridshield::grid {

enum class BusKind { slack, pv, pq };

struct Bus {
    int id = 0;  // external bus number from the case file
    BusKind kind = BusKind::pq;
    double load_p = 0.0;  // p.u. on base_mva
    double load_q = 0.0;
    double shunt_g = 0.0;  // p.u. admittance to ground
    double shunt_b = 0.0;
    double v_setpoint = 1.0;  // PV/slack only
    double v_init = 1.0;      // stored operating point, used as solver fallback
    double angle_init = 0.0;  // radians
};

struct Branch {
    int id = 0;  // 0-based position in the branch table
    int from_bus = 0;
    int to_bus = 0;  // external ids
    double r = 0.0;
    double x = 0.0;
    double charging_b = 0.0;
    double tap_ratio = 1.0;  // from-side; 1.0 when the case stores 0
    bool default_closed = true;
};

struct Generator {
    int bus = 0;  // external id
    double p_set = 0.0;
    double v_set = 1.0;
};

// Static bus-branch network, per-unit on base_mva.
struct GridCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    std::unordered_map<int, int> bus_index;  // external id -> position in buses

    int slack_index() const;
    int index_of(int bus_id) const;
    bool has_load(int bus_pos) const {
        return buses[bus_pos].load_p != 0.0 || buses[bus_pos].load_q != 0.0;
    }
    bool has_generation(int bus_pos) const;

    // Copy with every branch reactance increased by x_extra. Scenario ground
    // truth is solved on this modified case so the physics matches the
    // switch-augmented estimation circuit exactly.
    GridCase with_series_reactance(double x_extra) const;

    void validate() const;  // throws data_error on invariant violations
};

// Per-branch closed/open state at one time tick.
struct Topology {
    std::vector<uint8_t> closed;  // 1 = closed
    int tick = 0;

    bool operator==(const Topology& other) const { return closed == other.closed; }
    std::size_t count_closed() const;
};

struct PseudoSwitch {
    int switch_id = 0;  // == branch id
    int branch_id = 0;
    double x_sw = 1e-4;  // p.u. reactance when closed
    bool closed = true;
};

// Bus-branch case rewired for topology estimation: every branch becomes
// (from_bus -- series element -- pseudo bus -- switch -- to_bus).
struct AugmentedNetwork {
    const GridCase* base = nullptr;
    int n_original = 0;  // node [0, n_original) = original buses
    int n_nodes = 0;     // n_original + branch count
    std::vector<PseudoSwitch> switches;

    int pseudo_node(int branch_id) const { return n_original + branch_id; }
    int node_of_bus(int bus_pos) const { return bus_pos; }
    Topology current_topology() const;
};

GridCase parse_case(const std::string& text, const std::string& name = "case");
GridCase load_case_file(const std::string& path);

AugmentedNetwork augment_with_pseudo_switches(const GridCase& grid, double x_sw = 1e-4);

// Updates switch states in place semantics are avoided: returns the updated copy.
AugmentedNetwork apply_topology(AugmentedNetwork net, const Topology& topo);

// True iff every bus with load or generation can reach the slack bus through
// closed branches.
bool check_connectivity(const GridCase& grid, const Topology& topo);

Topology all_closed_topology(const GridCase& grid);
Topology default_topology(const GridCase& grid);  // from case branch statuses

}  // namespace gridshield::grid

#include "gridshield/grid_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "gridshield/errors.hpp"

namespace gridshield::grid {

int GridCase::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].kind == BusKind::slack) return static_cast<int>(i);
    throw data_error("case '" + name + "' has no slack bus");
}

int GridCase::index_of(int bus_id) const {
    auto it = bus_index.find(bus_id);
    if (it == bus_index.end())
        throw data_error("case '" + name + "' references unknown bus " + std::to_string(bus_id));
    return it->second;
}

bool GridCase::has_generation(int bus_pos) const {
    int id = buses[bus_pos].id;
    return std::any_of(generators.begin(), generators.end(),
                       [id](const Generator& g) { return g.bus == id; });
}

GridCase GridCase::with_series_reactance(double x_extra) const {
    GridCase out = *this;
    for (auto& br : out.branches) br.x += x_extra;
    return out;
}

void GridCase::validate() const {
    int slacks = 0;
    for (const auto& b : buses)
        if (b.kind == BusKind::slack) ++slacks;
    if (slacks != 1)
        throw data_error("case '" + name + "' must have exactly one slack bus, found " +
                         std::to_string(slacks));
    for (const auto& br : branches) {
        if (!bus_index.count(br.from_bus) || !bus_index.count(br.to_bus))
            throw data_error("branch " + std::to_string(br.id) + " endpoint (" +
                             std::to_string(br.from_bus) + "," + std::to_string(br.to_bus) +
                             ") not in bus table");
        if (br.r == 0.0 && br.x == 0.0)
            throw data_error("branch " + std::to_string(br.id) + " has zero impedance");
    }
    for (const auto& g : generators)
        if (!bus_index.count(g.bus))
            throw data_error("generator references unknown bus " + std::to_string(g.bus));
}

std::size_t Topology::count_closed() const {
    return static_cast<std::size_t>(std::count(closed.begin(), closed.end(), uint8_t{1}));
}

namespace {

// Matrix block of a case file: rows of doubles between "[" and "];",
// rows separated by ';' or newline, '%' starts a comment.
std::vector<std::vector<double>> parse_matrix(const std::string& body, const std::string& name,
                                              int first_line) {
    std::vector<std::vector<double>> rows;
    std::vector<double> row;
    std::string tok;
    int line = first_line;
    auto flush_token = [&]() {
        if (tok.empty()) return;
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            row.push_back(v);
        } catch (const std::exception&) {
            throw data_error("parse error in " + name + " near line " + std::to_string(line) +
                             ": bad number '" + tok + "'");
        }
        tok.clear();
    };
    auto flush_row = [&]() {
        flush_token();
        if (!row.empty()) {
            rows.push_back(row);
            row.clear();
        }
    };
    bool comment = false;
    for (char c : body) {
        if (c == '\n') {
            comment = false;
            flush_row();
            ++line;
            continue;
        }
        if (comment) continue;
        if (c == '%') {
            comment = true;
            continue;
        }
        if (c == ';') {
            flush_row();
        } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            flush_token();
        } else {
            tok += c;
        }
    }
    flush_row();
    if (!rows.empty()) {
        std::size_t w = rows.front().size();
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].size() != w)
                throw data_error("ragged rows in " + name + " (row " + std::to_string(i + 1) +
                                 " has " + std::to_string(rows[i].size()) + " columns, expected " +
                                 std::to_string(w) + ")");
    }
    return rows;
}

struct Block {
    std::string body;
    int line = 0;
    bool found = false;
};

Block find_block(const std::string& text, const std::string& key) {
    Block blk;
    std::size_t pos = text.find(key);
    while (pos != std::string::npos) {
        // must be followed by '=' then '['
        std::size_t eq = text.find_first_not_of(" \t", pos + key.size());
        if (eq != std::string::npos && text[eq] == '=') {
            std::size_t open = text.find('[', eq);
            if (open == std::string::npos) break;
            std::size_t close = text.find(']', open);
            if (close == std::string::npos)
                throw data_error("unterminated matrix for " + key);
            blk.body = text.substr(open + 1, close - open - 1);
            blk.line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + open, '\n'));
            blk.found = true;
            return blk;
        }
        pos = text.find(key, pos + key.size());
    }
    return blk;
}

double find_scalar(const std::string& text, const std::string& key, double fallback, bool* found) {
    *found = false;
    std::size_t pos = text.find(key);
    if (pos == std::string::npos) return fallback;
    std::size_t eq = text.find('=', pos);
    if (eq == std::string::npos) return fallback;
    std::size_t end = text.find_first_of(";\n", eq);
    std::string val = text.substr(eq + 1, end - eq - 1);
    try {
        *found = true;
        return std::stod(val);
    } catch (const std::exception&) {
        throw data_error("bad scalar for " + key + ": '" + val + "'");
    }
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

GridCase parse_case(const std::string& text, const std::string& name) {
    GridCase gc;
    gc.name = name;

    bool found = false;
    gc.base_mva = find_scalar(text, "mpc.baseMVA", 100.0, &found);
    if (!found) throw data_error("case '" + name + "': missing mpc.baseMVA");
    if (gc.base_mva <= 0) throw data_error("case '" + name + "': baseMVA must be positive");

    Block bus_blk = find_block(text, "mpc.bus");
    Block branch_blk = find_block(text, "mpc.branch");
    Block gen_blk = find_block(text, "mpc.gen");
    if (!bus_blk.found) throw data_error("case '" + name + "': missing mpc.bus matrix");
    if (!branch_blk.found) throw data_error("case '" + name + "': missing mpc.branch matrix");

    auto bus_rows = parse_matrix(bus_blk.body, "mpc.bus", bus_blk.line);
    auto branch_rows = parse_matrix(branch_blk.body, "mpc.branch", branch_blk.line);
    std::vector<std::vector<double>> gen_rows;
    if (gen_blk.found) gen_rows = parse_matrix(gen_blk.body, "mpc.gen", gen_blk.line);

    for (const auto& r : bus_rows) {
        if (r.size() < 13)
            throw data_error("case '" + name + "': bus row needs >= 13 columns, got " +
                             std::to_string(r.size()));
        Bus b;
        b.id = static_cast<int>(r[0]);
        int type = static_cast<int>(r[1]);
        switch (type) {
            case 3: b.kind = BusKind::slack; break;
            case 2: b.kind = BusKind::pv; break;
            case 1:
            case 4: b.kind = BusKind::pq; break;
            default:
                throw data_error("case '" + name + "': bus " + std::to_string(b.id) +
                                 " has unknown type " + std::to_string(type));
        }
        b.load_p = r[2] / gc.base_mva;
        b.load_q = r[3] / gc.base_mva;
        b.shunt_g = r[4] / gc.base_mva;
        b.shunt_b = r[5] / gc.base_mva;
        b.v_init = r[7];
        b.angle_init = r[8] * kPi / 180.0;
        b.v_setpoint = r[7] != 0.0 ? r[7] : 1.0;
        if (gc.bus_index.count(b.id))
            throw data_error("case '" + name + "': duplicate bus id " + std::to_string(b.id));
        gc.bus_index[b.id] = static_cast<int>(gc.buses.size());
        gc.buses.push_back(b);
    }

    int branch_id = 0;
    for (const auto& r : branch_rows) {
        if (r.size() < 11)
            throw data_error("case '" + name + "': branch row needs >= 11 columns, got " +
                             std::to_string(r.size()));
        Branch br;
        br.id = branch_id++;
        br.from_bus = static_cast<int>(r[0]);
        br.to_bus = static_cast<int>(r[1]);
        br.r = r[2];
        br.x = r[3];
        br.charging_b = r[4];
        br.tap_ratio = r[8] != 0.0 ? r[8] : 1.0;
        br.default_closed = r[10] != 0.0;
        gc.branches.push_back(br);
    }

    for (const auto& r : gen_rows) {
        if (r.size() < 8)
            throw data_error("case '" + name + "': gen row needs >= 8 columns, got " +
                             std::to_string(r.size()));
        if (r[7] <= 0) continue;  // out-of-service unit
        Generator g;
        g.bus = static_cast<int>(r[0]);
        g.p_set = r[1] / gc.base_mva;
        g.v_set = r[5] != 0.0 ? r[5] : 1.0;
        gc.generators.push_back(g);
    }

    // PV/slack setpoints come from the first in-service unit at the bus.
    for (const auto& g : gc.generators) {
        auto it = gc.bus_index.find(g.bus);
        if (it == gc.bus_index.end())
            throw data_error("case '" + name + "': generator at unknown bus " +
                             std::to_string(g.bus));
        Bus& b = gc.buses[it->second];
        if (b.kind != BusKind::pq) b.v_setpoint = g.v_set;
    }

    gc.validate();
    return gc;
}

GridCase load_case_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open case file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string stem = path;
    if (auto slash = stem.find_last_of('/'); slash != std::string::npos)
        stem = stem.substr(slash + 1);
    if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
    return parse_case(ss.str(), stem);
}

AugmentedNetwork augment_with_pseudo_switches(const GridCase& grid, double x_sw) {
    AugmentedNetwork net;
    net.base = &grid;
    net.n_original = static_cast<int>(grid.buses.size());
    net.n_nodes = net.n_original + static_cast<int>(grid.branches.size());
    net.switches.reserve(grid.branches.size());
    for (const auto& br : grid.branches) {
        PseudoSwitch sw;
        sw.switch_id = br.id;
        sw.branch_id = br.id;
        sw.x_sw = x_sw;
        sw.closed = br.default_closed;
        net.switches.push_back(sw);
    }
    return net;
}

Topology AugmentedNetwork::current_topology() const {
    Topology t;
    t.closed.resize(switches.size());
    for (std::size_t i = 0; i < switches.size(); ++i) t.closed[i] = switches[i].closed ? 1 : 0;
    return t;
}

AugmentedNetwork apply_topology(AugmentedNetwork net, const Topology& topo) {
    if (topo.closed.size() != net.switches.size())
        throw data_error("topology length " + std::to_string(topo.closed.size()) +
                         " does not match switch count " + std::to_string(net.switches.size()));
    for (std::size_t i = 0; i < topo.closed.size(); ++i) net.switches[i].closed = topo.closed[i] != 0;
    return net;
}

bool check_connectivity(const GridCase& grid, const Topology& topo) {
    if (topo.closed.size() != grid.branches.size())
        throw data_error("topology length does not match branch count");
    const int n = static_cast<int>(grid.buses.size());
    std::vector<std::vector<int>> adj(n);
    for (const auto& br : grid.branches) {
        if (!topo.closed[br.id]) continue;
        int f = grid.index_of(br.from_bus);
        int t = grid.index_of(br.to_bus);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    int slack = grid.slack_index();
    seen[slack] = 1;
    q.push(slack);
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                q.push(v);
            }
    }
    for (int i = 0; i < n; ++i) {
        if (seen[i]) continue;
        if (grid.has_load(i) || grid.has_generation(i)) return false;
    }
    return true;
}

Topology all_closed_topology(const GridCase& grid) {
    Topology t;
    t.closed.assign(grid.branches.size(), 1);
    return t;
}

Topology default_topology(const GridCase& grid) {
    Topology t;
    t.closed.resize(grid.branches.size());
    for (const auto& br : grid.branches) t.closed[br.id] = br.default_closed ? 1 : 0;
    return t;
}

}  // namespace gridshield::grid

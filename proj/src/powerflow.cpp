#include "gridshield/powerflow.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "gridshield/branch_model.hpp"
#include "gridshield/errors.hpp"

namespace gridshield::powerflow {

using grid::Complex;

double state_rmse(const StateVector& pred, const StateVector& truth) {
    double acc = 0.0;
    for (int i = 0; i < pred.size(); ++i) {
        double dr = pred.v_real[i] - truth.v_real[i];
        double di = pred.v_imag[i] - truth.v_imag[i];
        acc += dr * dr + di * di;
    }
    return std::sqrt(acc);
}

LoadSet case_loads(const grid::GridCase& grid) {
    const int n = static_cast<int>(grid.buses.size());
    LoadSet loads;
    loads.p.resize(n);
    loads.q.resize(n);
    for (int i = 0; i < n; ++i) {
        loads.p[i] = grid.buses[i].load_p;
        loads.q[i] = grid.buses[i].load_q;
    }
    return loads;
}

LoadSet scale_loads(const LoadSet& loads, double factor) {
    if (factor <= 0.0) throw data_error("load scale factor must be positive");
    LoadSet out;
    out.p = loads.p * factor;
    out.q = loads.q * factor;
    return out;
}

namespace {

struct YBus {
    Eigen::SparseMatrix<Complex> Y;
};

YBus build_ybus(const grid::GridCase& grid, const grid::Topology& topo) {
    const int n = static_cast<int>(grid.buses.size());
    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(grid.branches.size() * 4 + n);
    for (const auto& br : grid.branches) {
        if (!topo.closed[br.id]) continue;
        auto tp = grid::branch_two_port(br.r, br.x, br.charging_b, br.tap_ratio);
        int f = grid.index_of(br.from_bus);
        int t = grid.index_of(br.to_bus);
        trips.emplace_back(f, f, tp.y_ff);
        trips.emplace_back(f, t, tp.y_ft);
        trips.emplace_back(t, f, tp.y_tf);
        trips.emplace_back(t, t, tp.y_tt);
    }
    for (int i = 0; i < n; ++i)
        trips.emplace_back(i, i, Complex(grid.buses[i].shunt_g, grid.buses[i].shunt_b));
    YBus yb;
    yb.Y.resize(n, n);
    yb.Y.setFromTriplets(trips.begin(), trips.end());
    return yb;
}

struct InjectionSpec {
    Eigen::VectorXd p;            // scheduled net injection per bus
    Eigen::VectorXd q;            // scheduled (PQ only meaningful)
    std::vector<int> pv_or_pq;    // all buses except slack
    std::vector<int> pq;          // PQ buses
    std::vector<int> pos_theta;   // var index of theta per bus, -1 if fixed
    std::vector<int> pos_vm;      // var index of vm per bus, -1 if fixed
};

InjectionSpec build_spec(const grid::GridCase& grid, const LoadSet& loads) {
    const int n = static_cast<int>(grid.buses.size());
    InjectionSpec spec;
    spec.p = -loads.p;
    spec.q = -loads.q;
    for (const auto& g : grid.generators) spec.p[grid.index_of(g.bus)] += g.p_set;

    spec.pos_theta.assign(n, -1);
    spec.pos_vm.assign(n, -1);
    int var = 0;
    for (int i = 0; i < n; ++i) {
        if (grid.buses[i].kind == grid::BusKind::slack) continue;
        spec.pv_or_pq.push_back(i);
        spec.pos_theta[i] = var++;
    }
    for (int i = 0; i < n; ++i) {
        if (grid.buses[i].kind != grid::BusKind::pq) continue;
        spec.pq.push_back(i);
        spec.pos_vm[i] = var++;
    }
    return spec;
}

bool newton_raphson(const grid::GridCase& grid, const YBus& yb, const InjectionSpec& spec,
                    Eigen::VectorXd& vm, Eigen::VectorXd& va, const PowerflowOptions& opts,
                    double* final_mismatch) {
    const int n = static_cast<int>(grid.buses.size());
    const int n_th = static_cast<int>(spec.pv_or_pq.size());
    const int n_v = static_cast<int>(spec.pq.size());
    const int n_var = n_th + n_v;
    const auto& Y = yb.Y;

    Eigen::VectorXd pcalc(n), qcalc(n);
    Eigen::VectorXd f(n_var);
    Eigen::SparseMatrix<double> J(n_var, n_var);
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;

    for (int iter = 0; iter <= opts.max_iterations; ++iter) {
        // injections at current voltages
        for (int i = 0; i < n; ++i) {
            Complex acc = 0.0;
            Complex vi = std::polar(vm[i], va[i]);
            for (Eigen::SparseMatrix<Complex>::InnerIterator it(Y, i); it; ++it) {
                // column-major: iterating column i gives Y(row, i); use symmetry of storage
                (void)it;
            }
            (void)vi;
            (void)acc;
            break;
        }
        // compute S = V .* conj(Y V)
        Eigen::VectorXcd V(n);
        for (int i = 0; i < n; ++i) V[i] = std::polar(vm[i], va[i]);
        Eigen::VectorXcd I = Y * V;
        for (int i = 0; i < n; ++i) {
            Complex s = V[i] * std::conj(I[i]);
            pcalc[i] = s.real();
            qcalc[i] = s.imag();
        }

        double worst = 0.0;
        for (int k = 0; k < n_th; ++k) {
            int i = spec.pv_or_pq[k];
            f[k] = spec.p[i] - pcalc[i];
            worst = std::max(worst, std::abs(f[k]));
        }
        for (int k = 0; k < n_v; ++k) {
            int i = spec.pq[k];
            f[n_th + k] = spec.q[i] - qcalc[i];
            worst = std::max(worst, std::abs(f[n_th + k]));
        }
        if (final_mismatch) *final_mismatch = worst;
        if (worst < opts.tolerance) return true;
        if (iter == opts.max_iterations) return false;

        trips.clear();
        // Jacobian entries follow the Ybus sparsity pattern.
        for (int j = 0; j < n; ++j) {
            for (Eigen::SparseMatrix<Complex>::InnerIterator it(Y, j); it; ++it) {
                int i = static_cast<int>(it.row());
                double G = it.value().real();
                double B = it.value().imag();
                double vi = vm[i], vj = vm[j];
                double thij = va[i] - va[j];
                double c = std::cos(thij), s = std::sin(thij);

                double dP_dth, dQ_dth, dP_dv, dQ_dv;
                if (i == j) {
                    dP_dth = -qcalc[i] - B * vi * vi;
                    dQ_dth = pcalc[i] - G * vi * vi;
                    dP_dv = pcalc[i] / vi + G * vi;
                    dQ_dv = qcalc[i] / vi - B * vi;
                } else {
                    dP_dth = vi * vj * (G * s - B * c);
                    dQ_dth = -vi * vj * (G * c + B * s);
                    dP_dv = vi * (G * c + B * s);
                    dQ_dv = vi * (G * s - B * c);
                }

                int rp = spec.pos_theta[i];   // row of P-mismatch for bus i
                int rq = spec.pos_vm[i] >= 0 ? n_th + (spec.pos_vm[i] - n_th) : -1;
                if (spec.pos_vm[i] >= 0) rq = spec.pos_vm[i];
                // columns
                int cth = spec.pos_theta[j];
                int cv = spec.pos_vm[j];
                if (rp >= 0) {
                    if (cth >= 0) trips.emplace_back(rp, cth, dP_dth);
                    if (cv >= 0) trips.emplace_back(rp, cv, dP_dv);
                }
                if (rq >= 0) {
                    if (cth >= 0) trips.emplace_back(rq, cth, dQ_dth);
                    if (cv >= 0) trips.emplace_back(rq, cv, dQ_dv);
                }
            }
        }
        J.setFromTriplets(trips.begin(), trips.end());
        lu.compute(J);
        if (lu.info() != Eigen::Success) return false;
        Eigen::VectorXd dx = lu.solve(f);
        if (!dx.allFinite()) return false;

        for (int k = 0; k < n_th; ++k) va[spec.pv_or_pq[k]] += dx[k];
        for (int k = 0; k < n_v; ++k) {
            vm[spec.pq[k]] += dx[n_th + k];
            vm[spec.pq[k]] = std::max(vm[spec.pq[k]], 0.1);
        }
    }
    return false;
}

}  // namespace

StateVector solve_powerflow(const grid::GridCase& grid, const grid::Topology& topo,
                            const LoadSet& loads, const PowerflowOptions& opts) {
    if (topo.closed.size() != grid.branches.size())
        throw data_error("solve_powerflow: topology length mismatch");
    if (!check_connectivity(grid, topo))
        throw numerical_error("solve_powerflow: topology islands a load or generator bus");

    const int n = static_cast<int>(grid.buses.size());
    YBus yb = build_ybus(grid, topo);
    InjectionSpec spec = build_spec(grid, loads);

    Eigen::VectorXd vm(n), va(n);
    auto init = [&](bool flat) {
        for (int i = 0; i < n; ++i) {
            const auto& b = grid.buses[i];
            bool regulated = b.kind != grid::BusKind::pq;
            vm[i] = regulated ? b.v_setpoint : (flat ? 1.0 : b.v_init);
            va[i] = flat ? 0.0 : b.angle_init;
        }
        int slack = grid.slack_index();
        double shift = va[slack];
        for (int i = 0; i < n; ++i) va[i] -= shift;
    };

    double mismatch = 0.0;
    bool ok = false;
    if (opts.flat_start) {
        init(true);
        ok = newton_raphson(grid, yb, spec, vm, va, opts, &mismatch);
    }
    if (!ok) {
        init(false);
        ok = newton_raphson(grid, yb, spec, vm, va, opts, &mismatch);
    }
    if (!ok)
        throw numerical_error("power flow did not converge (max mismatch " +
                              std::to_string(mismatch) + " p.u.)");

    StateVector st;
    st.v_real.resize(n);
    st.v_imag.resize(n);
    for (int i = 0; i < n; ++i) {
        st.v_real[i] = vm[i] * std::cos(va[i]);
        st.v_imag[i] = vm[i] * std::sin(va[i]);
    }
    int slack = grid.slack_index();
    st.v_imag[slack] = 0.0;  // exact by construction, clear rounding dust
    return st;
}

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("GRIDSHIELD_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

ScenarioTrace generate_scenario(const grid::GridCase& grid, const ScenarioConfig& config) {
    if (config.ticks < 1) throw usage_error("scenario needs at least one tick");
    grid::GridCase sim_case = grid.with_series_reactance(config.x_sw);

    std::mt19937_64 rng(splitmix64(config.seed));
    auto connectivity_ok = [&](const grid::Topology& t) { return check_connectivity(grid, t); };

    // --- topology schedule ---
    grid::Topology topo = grid::default_topology(grid);
    const int nb = static_cast<int>(grid.branches.size());
    ScenarioTrace trace;
    trace.case_name = grid.name;
    trace.config = config;

    int rotation_open = -1;  // the branch the next regular event will re-close
    for (int k = 0; k < nb; ++k)
        if (!topo.closed[k]) {
            rotation_open = k;
            break;
        }
    if (rotation_open < 0 && config.topology_change_every > 0 && nb > 1) {
        // no default-open line: open a random connectivity-safe one up front
        std::uniform_int_distribution<int> pick(0, nb - 1);
        for (int attempt = 0; attempt < config.max_resample; ++attempt) {
            int k = pick(rng);
            grid::Topology trial = topo;
            trial.closed[k] = 0;
            if (connectivity_ok(trial)) {
                topo = trial;
                rotation_open = k;
                break;
            }
        }
    }
    if (!connectivity_ok(topo)) throw data_error("default topology is not connected");

    struct TickPlan {
        grid::Topology topo;
        double profile_m = 1.0;
    };
    std::vector<TickPlan> plan(config.ticks);

    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, nb - 1);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    int pending_restore = -1;  // branch opened for exactly one tick
    for (int t = 0; t < config.ticks; ++t) {
        if (pending_restore >= 0) {
            topo.closed[pending_restore] = 1;
            trace.action_log.push_back({t, false, {}, {pending_restore}});
            pending_restore = -1;
        }
        bool regular_tick =
            config.topology_change_every > 0 && t > 0 && t % config.topology_change_every == 0;
        if (regular_tick && rotation_open >= 0) {
            // re-close the line opened at the previous event, open a new random one
            for (int attempt = 0; attempt < config.max_resample; ++attempt) {
                int k = pick(rng);
                if (k == rotation_open || !topo.closed[k]) continue;
                grid::Topology trial = topo;
                trial.closed[rotation_open] = 1;
                trial.closed[k] = 0;
                if (connectivity_ok(trial)) {
                    trace.action_log.push_back({t, true, {k}, {rotation_open}});
                    topo = trial;
                    rotation_open = k;
                    break;
                }
                if (attempt + 1 == config.max_resample)
                    throw numerical_error("no connectivity-preserving topology swap found at tick " +
                                          std::to_string(t));
            }
        }
        if (config.irregular_rate > 0.0 && uni(rng) < config.irregular_rate) {
            for (int attempt = 0; attempt < config.max_resample; ++attempt) {
                int k = pick(rng);
                if (!topo.closed[k]) continue;
                grid::Topology trial = topo;
                trial.closed[k] = 0;
                if (connectivity_ok(trial)) {
                    trace.action_log.push_back({t, false, {k}, {}});
                    topo = trial;
                    pending_restore = k;
                    break;
                }
            }
        }
        plan[t].topo = topo;
        plan[t].topo.tick = t;

        double m = 1.0 + config.profile.amplitude *
                             std::sin(2.0 * 3.14159265358979323846 * t / config.profile.period_ticks);
        m += config.profile.noise_sigma * noise(rng);
        plan[t].profile_m = std::clamp(m, config.profile.clip_lo, config.profile.clip_hi);
    }

    // --- solve all ticks (parallel, deterministic: plan fixed above) ---
    LoadSet base = case_loads(grid);
    trace.ticks.resize(config.ticks);
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string fail_msg;
    std::mutex fail_mutex;

    auto worker = [&]() {
        PowerflowOptions opts;
        for (;;) {
            int t = next.fetch_add(1);
            if (t >= config.ticks || failed.load()) return;
            try {
                ScenarioTick& tk = trace.ticks[t];
                tk.topology = plan[t].topo;
                tk.loads = scale_loads(base, plan[t].profile_m);
                tk.true_state = solve_powerflow(sim_case, tk.topology, tk.loads, opts);
                tk.anomaly.tick = t;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(fail_mutex);
                failed = true;
                fail_msg = "tick " + std::to_string(t) + ": " + e.what();
            }
        }
    };

    int n_threads = std::min(resolve_thread_count(config.threads), config.ticks);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed) throw numerical_error("scenario generation failed: " + fail_msg);
    return trace;
}

std::string anomaly_kind_name(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::none: return "none";
        case AnomalyKind::bad_data: return "bad_data";
        case AnomalyKind::topology_error: return "topology_error";
        case AnomalyKind::fdia: return "fdia";
    }
    return "none";
}

AnomalyKind anomaly_kind_from_name(const std::string& s) {
    if (s == "bad_data") return AnomalyKind::bad_data;
    if (s == "topology_error") return AnomalyKind::topology_error;
    if (s == "fdia") return AnomalyKind::fdia;
    if (s == "none") return AnomalyKind::none;
    throw data_error("unknown anomaly kind: " + s);
}

}  // namespace gridshield::powerflow

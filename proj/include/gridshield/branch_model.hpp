#pragma once

#include <complex>

#include "gridshield/grid_model.hpp"

namespace gridshield::grid {

using Complex = std::complex<double>;

// Standard pi-model two-port with from-side tap:
//   I_f = y_ff V_f + y_ft V_t
//   I_t = y_tf V_f + y_tt V_t
struct TwoPort {
    Complex y_ff, y_ft, y_tf, y_tt;
};

inline TwoPort branch_two_port(double r, double x, double charging_b, double tap) {
    Complex y = 1.0 / Complex(r, x);
    Complex ysh(0.0, charging_b / 2.0);
    double t2 = tap * tap;
    return {(y + ysh) / t2, -y / tap, -y / tap, y + ysh};
}

// Composite model of (series element + closed pseudo switch): identical to the
// plain branch with x_sw added to the series reactance.
inline TwoPort closed_branch_two_port(const Branch& br, double x_sw) {
    return branch_two_port(br.r, br.x + x_sw, br.charging_b, br.tap_ratio);
}

// The series element alone (from_bus -- pseudo_bus), charging attached at the
// original terminals only when the switch is closed.
inline TwoPort element_two_port(const Branch& br, bool closed) {
    double b = closed ? br.charging_b : 0.0;
    Complex y = 1.0 / Complex(br.r, br.x);
    Complex ysh(0.0, b / 2.0);
    double t2 = br.tap_ratio * br.tap_ratio;
    // to-side charging belongs at the original to bus, not the pseudo bus
    return {(y + ysh) / t2, -y / br.tap_ratio, -y / br.tap_ratio, y};
}

// Voltage of the pseudo bus between the series element and the switch.
inline Complex pseudo_bus_voltage(const Branch& br, double x_sw, bool closed, Complex v_from,
                                  Complex v_to) {
    Complex y = 1.0 / Complex(br.r, br.x);
    if (!closed) return v_from / br.tap_ratio;  // floats at the element output
    Complex y_sw = 1.0 / Complex(0.0, x_sw);
    return ((y / br.tap_ratio) * v_from + y_sw * v_to) / (y + y_sw);
}

}  // namespace gridshield::grid

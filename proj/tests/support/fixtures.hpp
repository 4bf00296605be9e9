#pragma once

#include <string>

#include "gridscreen/case_model.hpp"

namespace gridscreen::testing {

inline std::string data_path(const std::string& file) {
    return std::string(GRIDSCREEN_DATA_DIR) + "/" + file;
}

inline NetworkCase ieee6() { return load_case_file(data_path("case6ww.m")); }
inline NetworkCase ieee14() { return load_case_file(data_path("case14.m")); }
inline NetworkCase ieee30() { return load_case_file(data_path("case30.m")); }

// Symmetric 3-bus triangle: slack + two identical PQ loads, three lines.
inline NetworkCase triangle() {
    NetworkCase c;
    c.base_mva = 100.0;
    c.name = "triangle3";
    c.buses = {
        {1, BusKind::Slack, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 230.0},
        {2, BusKind::PQ, 40.0, 10.0, 0.0, 0.0, 1.0, 0.0, 230.0},
        {3, BusKind::PQ, 40.0, 10.0, 0.0, 0.0, 1.0, 0.0, 230.0},
    };
    c.gens = {{1, 0.0, 0.0, 1.0, true}};
    c.branches = {
        {1, 2, 0.02, 0.1, 0.02, 1.0, true},
        {1, 3, 0.02, 0.1, 0.02, 1.0, true},
        {2, 3, 0.03, 0.12, 0.02, 1.0, true},
    };
    validate_case(c);
    return c;
}

inline const char* kTwoBusText = R"(function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1  3  0   0   0  0  1  1.0  0  230  1  1.1  0.9;
    2  1  50  20  0  0  1  1.0  0  230  1  1.1  0.9;
];
mpc.gen = [
    1  0  0  100  -100  1.0  100  1  200  0;
];
mpc.branch = [
    1  2  0.01  0.1  0.02  0  0  0  0  0  1;
];
)";

}  // namespace gridscreen::testing

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "forkbench/mining_mdp.hpp"

namespace testsupport {

// Optimal policy table for (alpha = 0.35, gamma = 1), l_a rows 1..8, l_h columns 1..8.
inline const char* const kTableII =
    "1 *** *a* *** *** *** *** *** ***\n"
    "2 w** *m* *w* *a* *** *** *** ***\n"
    "3 w** *oo w** *w* *a* *** *** ***\n"
    "4 w** *m* oo* w** *w* *a* *** ***\n"
    "5 w** *mw *m* oo* w** *w* *w* *a*\n"
    "6 w** *mw *mw *m* oo* w** ww* *w*\n"
    "7 w** *mw *mw *mw *m* oo* w** ww*\n"
    "8 w** *mw *mw *mw *mw *m* oo* w**\n";

// Upper chi-square quantile with k dof (Wilson-Hilferty); z = 3.29 is the 0.9995 point.
inline double chi2_critical(double k, double z = 3.2905) {
    const double h = 2.0 / (9.0 * k);
    return k * std::pow(1.0 - h + z * std::sqrt(h), 3.0);
}

// Pearson statistic over categories with expected count >= 5; sparse tails are pooled.
inline double chi2_stat(const std::vector<double>& observed, const std::vector<double>& expected, int& dof) {
    double stat = 0.0, pooled_o = 0.0, pooled_e = 0.0;
    int cats = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] >= 5.0) {
            stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
            ++cats;
        } else {
            pooled_o += observed[i];
            pooled_e += expected[i];
        }
    }
    if (pooled_e >= 5.0) {
        stat += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
        ++cats;
    }
    dof = cats - 1;
    return stat;
}

}  // namespace testsupport

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace fishmerge {

/// Kahan-compensated accumulator. Keeps long reductions (Fisher sums over
/// thousands of examples) permutation-stable to well below 1e-12 relative.
class KahanSum {
public:
    void add(double x) {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

/// Sum after sorting ascending. The result depends only on the multiset of
/// addends, which makes small reductions bit-exact under input permutation.
inline double sorted_sum(std::span<const double> terms) {
    if (terms.empty()) return 0.0;
    if (terms.size() == 1) return terms[0];
    std::vector<double> t(terms.begin(), terms.end());
    std::sort(t.begin(), t.end());
    double s = t[0];
    for (std::size_t i = 1; i < t.size(); ++i) s += t[i];
    return s;
}

/// In-place variant for hot loops; scratch holds the addends and is clobbered.
inline double sorted_sum_inplace(std::span<double> scratch) {
    if (scratch.empty()) return 0.0;
    std::sort(scratch.begin(), scratch.end());
    double s = scratch[0];
    for (std::size_t i = 1; i < scratch.size(); ++i) s += scratch[i];
    return s;
}

}  // namespace fishmerge

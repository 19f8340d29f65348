#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tailnet {

/// Runs every analytic gradient in the project against the central-difference
/// oracle on randomized small instances (C ≤ 5, N ≤ 16, D ≤ 8) and reports
/// the worst relative error per surface.
struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    std::size_t instances = 0;
    bool passed() const { return max_rel_err <= tolerance; }
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_passed() const;
};

GradCheckReport run_gradient_suite(std::uint64_t seed, std::size_t instances_per_case = 50);

}  // namespace tailnet

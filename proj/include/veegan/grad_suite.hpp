#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace veegan::gradcheck {

struct CaseResult {
    std::string name;
    double max_error = 0.0;  // worst grad_check error over all seeds
    bool ok = false;
};

struct SuiteReport {
    std::vector<CaseResult> cases;
    double tolerance = 0.0;
    double seconds = 0.0;

    bool pass() const;
};

/// Central-difference check of every tape primitive plus composed MLP losses, each at `seeds` random points.
SuiteReport run_suite(std::size_t seeds = 5, double tolerance = 1e-4);

}  // namespace veegan::gradcheck

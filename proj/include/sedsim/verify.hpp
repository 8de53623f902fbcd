#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sedsim {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct VerifyOptions {
    std::uint64_t master_seed = 20260814;  // every criterion derives its streams from this
    double corrupt_tol = 0.0;  // > 0 replaces the solver tolerance (induced-failure demo)
    std::string out_dir;       // optional artifact directory (records, plot data)
    int workers = 1;
};

// Acceptance battery, criteria 1..10: scaling laws for the mean settling
// speed and fluctuations under mixing vs hyperuniform ensembles, solver
// cross-checks against a dense oracle, method-of-reflections agreement,
// point-process statistics, the variance dichotomy, and the effective
// viscosity bound. Each criterion yields one entry per sub-check and passes
// when all of them do.
std::vector<CheckResult> run_criterion(int criterion, const VerifyOptions& opts);
std::vector<CheckResult> run_all_criteria(const VerifyOptions& opts);

bool all_pass(const std::vector<CheckResult>& checks);
std::string format_check_line(const CheckResult& check);

}  // namespace sedsim

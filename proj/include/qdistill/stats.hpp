#ifndef QDISTILL_STATS_HPP
#define QDISTILL_STATS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdistill/errors.hpp"

namespace qdistill::stats {

double accuracy(std::span<const int> predictions, std::span<const int> labels);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation (n - 1)
};

MeanStd mean_std(std::span<const double> values);

// Two-tailed Student-t p-value via the regularized incomplete beta function
// (continued-fraction evaluation).
double student_t_two_tailed_p(double t, int df);

struct TTestResult {
    double t = 0.0;
    int df = 0;
    double p = 1.0;
    bool degenerate = false; // sd of differences was zero
};

// Paired test on per-seed accuracies: d = a - b, t = mean(d)/(sd(d)/sqrt(n)).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct McNemarResult {
    long only_a = 0; // a correct, b wrong
    long only_b = 0; // b correct, a wrong
    double p = 1.0;
};

// Per-sample comparison of two prediction-correctness vectors over the same
// evaluation set (chi-square approximation without continuity correction).
McNemarResult mcnemar_test(std::span<const std::uint8_t> a_correct,
                           std::span<const std::uint8_t> b_correct);

struct RunResult {
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::string arm;                        // "baseline", "distill", ...
    std::string config_fingerprint;
    int epochs_ran = 0;
    double best_val_accuracy = 0.0;
    std::vector<std::uint8_t> test_correct; // per-sample correctness flags
};

struct ComparisonBlock {
    std::string name_a;
    std::string name_b;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double delta_mean = 0.0; // a - b
    TTestResult t_test;
    std::optional<McNemarResult> mcnemar; // largest run pair, when available
};

struct ExperimentReport {
    std::string experiment_name;
    std::string config_fingerprint;
    // arm name -> per-seed results (seed order fixed across arms)
    std::map<std::string, std::vector<RunResult>> arms;
    std::vector<ComparisonBlock> comparisons;
    std::map<std::string, long> parameter_counts;
};

MeanStd arm_accuracy(const ExperimentReport& report, const std::string& arm);

// Builds the baseline-vs-distilled style comparison, pairing runs by seed
// order. McNemar is attached for the largest paired evaluation set.
ComparisonBlock compare_arms(const ExperimentReport& report, const std::string& arm_a,
                             const std::string& arm_b);

// "84.07 ± 0.18" with accuracies scaled to percent, two decimals.
std::string format_mean_std_percent(const MeanStd& ms);

// Writes <dir>/report.csv and <dir>/report.txt.
void emit_report(const ExperimentReport& report, const std::string& dir);

// Reads back the per-run rows and comparisons of an emitted report.csv;
// numeric values round-trip exactly.
ExperimentReport parse_report_csv(const std::string& path);

} // namespace qdistill::stats

#endif

#ifndef QDISTILL_EXPERIMENT_HPP
#define QDISTILL_EXPERIMENT_HPP

#include <string>
#include <vector>

#include "qdistill/config.hpp"
#include "qdistill/stats.hpp"

namespace qdistill::experiment {

struct LoadedData {
    data::Dataset train; // normalized, class-balanced subset
    data::Dataset test;
    data::Normalizer normalizer;
};

// Loads the configured dataset, draws the balanced subsets, fits the
// normalizer on the training subset and applies it everywhere.
LoadedData prepare_data(const config::ExperimentConfig& cfg);

struct TeacherArtifacts {
    bool present = false;
    std::string name;
    data::TeacherLogitsTable logits;
    double test_accuracy = 0.0; // natively trained teachers only
    long parameter_count = 0;
    bool natively_trained = false;
};

// Trains (or loads from the output dir) the configured teacher and exports
// its logits over the full training subset.
TeacherArtifacts prepare_teacher(const config::ExperimentConfig& cfg,
                                 const LoadedData& data);

// Full per-seed pipeline: optional teacher, optional baseline arm, distilled
// arm, report emission into cfg.out_dir.
stats::ExperimentReport run_experiment(const config::ExperimentConfig& cfg);

// One arm per axis value (reducer or encoding names), no teacher; shared
// subset across every value so orderings are comparable.
stats::ExperimentReport run_ablation(const config::ExperimentConfig& base,
                                     const std::string& axis,
                                     const std::vector<std::string>& values);

struct SweepCell {
    double tau = 0.0;
    double alpha = 0.0;
    double val_accuracy = 0.0;
};

std::vector<SweepCell> run_sweep(const config::ExperimentConfig& base,
                                 const std::vector<double>& taus,
                                 const std::vector<double>& alphas);

void write_sweep_csv(const std::string& path, const std::vector<double>& taus,
                     const std::vector<double>& alphas,
                     const std::vector<SweepCell>& cells);

// True when every configured require_* gate holds for the report.
bool report_meets_gates(const config::ExperimentConfig& cfg,
                        const stats::ExperimentReport& report);

} // namespace qdistill::experiment

#endif

#ifndef QDISTILL_CONFIG_HPP
#define QDISTILL_CONFIG_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qdistill/encode.hpp"
#include "qdistill/reduce.hpp"
#include "qdistill/train.hpp"

namespace qdistill::config {

// Resolved experiment description. Defaults: tau 2, alpha 0.4, lr 0.001,
// patience 10, 1024 shots.
struct ExperimentConfig {
    std::string dataset = "mnist"; // mnist|fashionmnist|cifar10|synth
    std::string data_root;         // may come from QDISTILL_DATA_ROOT
    int per_class = 200;
    int test_per_class = 100;
    int qubits = 4;
    int layers = 2;
    std::string encoding = "amplitude";
    std::string reducer = "fc";
    int hidden_dim = 32;
    std::string readout = "linear";
    std::string teacher = "lenet"; // lenet|alexnet|logits:<path>|none
    double tau = 2.0;
    double alpha = 0.4;
    double learning_rate = 0.001;
    int max_epochs = 1000;
    int patience = 10;
    int batch_size = 32;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    long shots = 1024;
    bool eval_with_shots = false;
    std::string engine = "adjoint";
    std::uint64_t data_seed = 1234;
    double val_fraction = 0.1;
    std::string out_dir = "out";
    bool with_baseline = true;
    double clip_norm = 10.0;
    // optional CI gates; failing them turns into exit code 3
    std::optional<double> require_min_gain;
    std::optional<double> require_max_p;

    bool has_teacher() const { return teacher != "none"; }
    bool teacher_is_logits() const { return teacher.rfind("logits:", 0) == 0; }
    std::string teacher_logits_path() const { return teacher.substr(7); }

    encode::EncodingKind encoding_kind() const {
        return encode::encoding_from_string(encoding);
    }
    reduce::ReducerKind reducer_kind() const {
        return reduce::reducer_from_string(reducer);
    }
    train::ReadoutMode readout_mode() const {
        return train::readout_from_string(readout);
    }
    train::GradientEngine gradient_engine() const {
        return train::engine_from_string(engine);
    }

    // Input geometry implied by the dataset.
    int channels() const { return dataset == "cifar10" ? 3 : 1; }
    int height() const { return dataset == "cifar10" ? 32 : 28; }
    int width() const { return height(); }

    train::StudentSpec student_spec() const;
};

// key=value lines, '#' comments; unknown keys reported as errors later.
std::map<std::string, std::string> parse_config_text(const std::string& raw);

struct ConfigValidation {
    ExperimentConfig config;
    std::vector<std::string> errors;
    bool ok() const { return errors.empty(); }
};

// Applies entries over the defaults and checks every constraint; all
// violations are reported together.
ConfigValidation validate_config(const std::map<std::string, std::string>& entries);

// Canonical text form (stable key order); basis of the fingerprint.
std::string config_to_text(const ExperimentConfig& cfg);
std::string config_fingerprint(const ExperimentConfig& cfg);

} // namespace qdistill::config

#endif

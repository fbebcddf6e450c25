#ifndef QDISTILL_TRAIN_HPP
#define QDISTILL_TRAIN_HPP

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdistill/data.hpp"
#include "qdistill/distill.hpp"
#include "qdistill/encode.hpp"
#include "qdistill/nn.hpp"
#include "qdistill/qsim.hpp"
#include "qdistill/reduce.hpp"

namespace qdistill::train {

enum class ReadoutMode { LinearHead, BasisProbs };
enum class GradientEngine { Adjoint, ParameterShift };
enum class OptimizerKind { Adam, SGD };

ReadoutMode readout_from_string(const std::string& name);
std::string readout_to_string(ReadoutMode mode);
GradientEngine engine_from_string(const std::string& name);

struct StudentSpec {
    reduce::ReducerKind reducer = reduce::ReducerKind::FullyConnected;
    int hidden_dim = 32; // FC reducer only
    encode::EncodingKind encoding = encode::EncodingKind::Amplitude;
    encode::RotationAxis axis = encode::RotationAxis::Y;
    int num_qubits = 4;
    int layers = 2;
    ReadoutMode readout = ReadoutMode::LinearHead;
    int num_classes = 10;
    int channels = 1;
    int height = 28;
    int width = 28;

    std::size_t input_dim() const {
        return static_cast<std::size_t>(channels) * height * width;
    }
    std::size_t target_dim() const {
        return encode::encoder_input_dim(encoding, num_qubits);
    }
    // Throws ConfigError when the reducer/encoding/readout combination is
    // inconsistent (non-FC reducer with a non-amplitude encoder, BasisProbs
    // with 2^Q < C, crop side exceeding the image, ...).
    void validate() const;
};

// Hybrid student: reducer -> encoder -> PQC -> readout. All trainable values
// live in one flat vector laid out as [fc reducer | circuit | head].
struct StudentModel {
    StudentSpec spec;
    qsim::CircuitSpec circuit;
    reduce::FcReducerShape fc_shape; // meaningful for FC reducer only
    reduce::PcaBasis pca;            // fitted for PCA reducer only
    std::vector<double> params;
    std::size_t fc_offset = 0, fc_count = 0;
    std::size_t circuit_offset = 0, circuit_count = 0;
    std::size_t head_offset = 0, head_count = 0;

    std::span<const double> fc_params() const {
        return {params.data() + fc_offset, fc_count};
    }
    std::span<const double> circuit_params() const {
        return {params.data() + circuit_offset, circuit_count};
    }
    std::span<const double> head_params() const {
        return {params.data() + head_offset, head_count};
    }
};

StudentModel student_init(const StudentSpec& spec, std::uint64_t seed,
                          const reduce::PcaBasis* pca = nullptr);

// component name -> trainable parameter count (frozen reducers count 0)
std::map<std::string, long> student_parameter_counts(const StudentModel& model);

struct StudentTrace {
    std::vector<double> image;        // reducer input (flattened sample)
    std::vector<double> features;     // reducer output
    std::vector<double> fc_hidden;    // FC reducer hidden activations
    qsim::Statevector input_state;    // encoded state
    qsim::Statevector output_state;   // after the circuit
    std::vector<double> expectations; // analytic, length Q
    std::vector<double> basis_probs;  // analytic, length 2^Q
    std::vector<double> logits;
};

std::vector<double> student_forward(const StudentModel& model,
                                    std::span<const double> image,
                                    StudentTrace* trace = nullptr);

// Shot-based readout used in evaluation mode only.
std::vector<double> student_forward_shots(const StudentModel& model,
                                          std::span<const double> image, long shots,
                                          std::uint64_t seed);

struct StudentGradients {
    std::vector<double> params; // same layout as StudentModel::params
    distill::LossBreakdown loss;
};

// Full chain-rule gradient of the training loss; teacher_logits == empty
// span means the plain cross-entropy baseline.
StudentGradients student_backward(const StudentModel& model,
                                  std::span<const double> image, int label,
                                  std::span<const double> teacher_logits,
                                  const distill::DistillConfig& cfg,
                                  GradientEngine engine,
                                  bool* warned_adjoint_fallback = nullptr);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    long step_count = 0;
};

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate,
                              std::size_t num_params);

void adam_step(OptimizerState& state, std::vector<double>& params,
               std::span<const double> grads);

struct TrainLoopConfig {
    int max_epochs = 1000;
    int patience = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;
    GradientEngine engine = GradientEngine::Adjoint;
    double learning_rate = 0.001;
    double clip_norm = 10.0; // 0 disables clipping
    bool verbose = false;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double kd = 0.0;
    double ce = 0.0;
    double val_accuracy = 0.0;
};

std::string history_to_text(const std::vector<EpochRecord>& history);

struct StudentFitResult {
    StudentModel model; // best-validation checkpoint
    std::vector<EpochRecord> history;
    double best_val_accuracy = 0.0;
    int best_epoch = 0;
    int epochs_ran = 0;
};

// Mini-batch training with early stopping on validation accuracy. With a
// teacher table and alpha > 0 the distillation objective is used; alpha == 0
// or a null teacher reduces to the plain cross-entropy baseline (bit-for-bit
// identical runs for the same seed).
StudentFitResult fit(const StudentModel& model, const data::Dataset& train,
                     const data::Dataset& val,
                     const data::TeacherLogitsTable* teacher,
                     const distill::DistillConfig& cfg, const TrainLoopConfig& loop);

struct Evaluation {
    double accuracy = 0.0;
    std::vector<int> predictions;
    std::vector<std::uint8_t> correct;
};

// shots == 0 evaluates analytically.
Evaluation evaluate_student(const StudentModel& model, const data::Dataset& ds,
                            long shots = 0, std::uint64_t seed = 0);

struct TeacherFitResult {
    std::vector<double> params;
    std::vector<EpochRecord> history;
    double best_val_accuracy = 0.0;
    int best_epoch = 0;
    int epochs_ran = 0;
};

TeacherFitResult fit_teacher(const nn::NetworkPlan& plan, const data::Dataset& train,
                             const data::Dataset& val, const TrainLoopConfig& loop);

Evaluation evaluate_teacher(const nn::NetworkPlan& plan, std::span<const double> params,
                            const data::Dataset& ds);

data::TeacherLogitsTable export_teacher_logits(const nn::NetworkPlan& plan,
                                               std::span<const double> params,
                                               const data::Dataset& ds,
                                               const std::string& teacher_name);

// Student checkpoint: circuit manifest text plus the flat parameter vector.
void save_student(const std::string& dir, const StudentModel& model);
StudentModel load_student(const std::string& dir, const StudentSpec& spec);

} // namespace qdistill::train

#endif

#ifndef QDISTILL_DATA_HPP
#define QDISTILL_DATA_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qdistill/tensor.hpp"

namespace qdistill::data {

enum class Split { Train, Val, Test };

struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<std::uint8_t> zero_sigma; // flagged constant features
    std::string fitted_on;                // provenance tag, e.g. "train"

    std::size_t num_zero_sigma() const;
};

struct Dataset {
    Tensor images; // N x C x H x W, values in [0, 1] until normalized
    std::vector<int> labels;
    std::vector<int> source_indices; // position in the originally loaded file
    Split split = Split::Train;
    std::optional<std::string> normalized_with; // Normalizer::fitted_on tag

    std::size_t size() const { return labels.size(); }
    int num_classes() const;
    std::size_t feature_dim() const {
        return images.size() / std::max<std::size_t>(size(), 1);
    }
    std::span<const double> sample(std::size_t i) const { return images.slice(i); }
};

// IDX pair loader (big-endian, magic 0x803 for images / 0x801 for labels);
// pixels scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR10 binary batches: 3073-byte records of 1 label byte + 3072 pixels.
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

// Per-feature population mean/std over the given split; constant features
// are flagged and later normalized to 0.
Normalizer fit_normalizer(const Dataset& train);

Dataset apply_normalizer(const Dataset& ds, const Normalizer& norm);

// Seeded, class-balanced subset with exactly per_class samples per label.
Dataset subset(const Dataset& ds, int per_class, std::uint64_t seed);

struct TrainValSplit {
    Dataset train;
    Dataset val;
};

// Stratified split that moves ~val_fraction of each class into `val`.
TrainValSplit stratified_split(const Dataset& ds, double val_fraction,
                               std::uint64_t seed);

// Teacher logits for distillation, keyed by source index.
struct TeacherLogitsTable {
    int num_classes = 0;
    std::string teacher_name;
    std::unordered_map<int, std::vector<double>> rows;

    std::span<const double> lookup(int source_index) const;
};

void save_teacher_logits(const std::string& path, const TeacherLogitsTable& table);

// Loads and validates coverage: every sample of `ds` must have a row and the
// class count must match.
TeacherLogitsTable load_teacher_logits(const std::string& path, const Dataset& ds);

TeacherLogitsTable load_teacher_logits_unchecked(const std::string& path);

// Writes a synthetic IDX pair (used by tests and fixtures).
void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                    const std::vector<std::vector<std::uint8_t>>& images, int rows,
                    int cols, const std::vector<std::uint8_t>& labels);

} // namespace qdistill::data

#endif

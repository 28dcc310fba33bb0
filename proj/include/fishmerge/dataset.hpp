#pragma once

#include "fishmerge/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fishmerge {

/// Feature matrix (one row per example) plus integer class labels.
struct LabeledDataset {
    Matrix features;  // n_examples x input_dim
    std::vector<int> labels;
    std::string provenance;

    std::int64_t n() const { return features.rows(); }
    std::int64_t dim() const { return features.cols(); }
};

/// Validates row counts and label nonnegativity.
void validate(const LabeledDataset& data);

/// Equal-width buckets: floor(n * (t - lo) / (hi - lo)) clamped to
/// [0, n_buckets - 1]; right-exclusive with the top edge clamped into the
/// last bucket. Rejects non-finite targets.
std::vector<int> bucketize_regression(std::span<const double> targets, double lo, double hi,
                                      int n_buckets);

/// Parameters for converting a real-valued "target" column to class labels.
struct BucketSpec {
    double lo;
    double hi;
    int n_buckets;
};

/// CSV layout: header row "f0,...,f{d-1},label" (integer classes) or
/// "f0,...,f{d-1},target" (reals; requires buckets).
LabeledDataset load_dataset_csv(const std::filesystem::path& path,
                                std::optional<BucketSpec> buckets = std::nullopt);

void save_dataset_csv(const LabeledDataset& data, const std::filesystem::path& path);

}  // namespace fishmerge

#pragma once

#include "fishmerge/checkpoint.hpp"
#include "fishmerge/dataset.hpp"
#include "fishmerge/fisher.hpp"
#include "fishmerge/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace fishmerge {

/// Prediction (output-averaging) ensemble: the arithmetic mean of the
/// members' probability vectors, re-logged. Members may differ in hidden
/// architecture but must share input_dim and num_classes.
struct EnsembleMember {
    ModelSpec spec;
    ParameterSet params;
};

PredictiveDistribution predict_output_ensemble(std::span<const EnsembleMember> members,
                                               const Eigen::Ref<const Vector>& x);

/// Accuracy of the output ensemble on a dataset (argmax of mean probability,
/// ties toward the lowest class index).
double output_ensemble_accuracy(std::span<const EnsembleMember> members,
                                const LabeledDataset& data);

/// Side-by-side accuracies of the four ensembling routes on one test set.
struct EnsembleReport {
    double fisher_merged = 0.0;
    double isotropic_merged = 0.0;
    double output_ensemble = 0.0;
    std::vector<double> individual;
    std::vector<double> lambdas;  // 1/M each, recorded for auditability
    std::int64_t inference_cost_ratio = 0;  // output ensembling costs M:1
    std::int64_t fisher_fallback_entries = 0;

    std::string to_json() const;
    std::string to_csv() const;
};

/// Merge-compatible same-task checkpoints (heads tagged body so they merge),
/// equal weights. checkpoints and fishers are index-aligned.
EnsembleReport ensemble_compare(std::span<const Checkpoint> checkpoints,
                                std::span<const FisherDiagonal> fishers, const ModelSpec& model,
                                const LabeledDataset& test_data, double epsilon = 1e-12);

}  // namespace fishmerge

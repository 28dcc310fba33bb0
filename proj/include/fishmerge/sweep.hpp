#pragma once

#include "fishmerge/dataset.hpp"
#include "fishmerge/merge.hpp"
#include "fishmerge/model.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fishmerge {

struct SweepPoint {
    std::vector<double> lambdas;
    std::map<std::string, double> metrics;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::size_t best_index = 0;
    std::string selection_metric;
};

/// For M=2: n_points values of lambda_1 evenly spaced over [0, 1] inclusive,
/// lambda_2 = 1 - lambda_1. For M>2: the M vertices, the barycenter, then
/// n_points seeded uniform draws from the simplex.
std::vector<std::vector<double>> lambda_grid(int m, int n_points, std::uint64_t seed = 0);

/// A MergeSpec minus the lambdas; sweep instantiates one spec per grid point.
struct MergeTemplate {
    struct Entry {
        ParameterSet params;
        RoleTags tags;
        std::optional<FisherDiagonal> fisher;
    };
    std::vector<Entry> entries;
    std::size_t target_index = 0;
    double epsilon = 1e-12;
    MergeMode mode = MergeMode::Isotropic;
};

/// Merge once per grid point, evaluate on the first val_limit validation
/// examples, record "acc"/"nll"/"n_fallback" per point and select the best
/// by selection_metric. Metric ties break toward the lambda vector giving
/// the most weight to the target model.
SweepResult sweep(const MergeTemplate& tmpl, const ModelSpec& model,
                  const std::vector<std::vector<double>>& grid, const LabeledDataset& val_data,
                  const std::string& selection_metric, std::int64_t val_limit = 2048);

enum class CurveMode { Isotropic, Fisher, Both };

/// Trade-off curve between a base model (pre) and a fine-tuned model (ft):
/// lambda_1 weights pre and sweeps 0..1 in `step` increments, recording
/// accuracy on the pre-task dataset (iid) and the ft-task dataset (ood) per
/// point. At the lambda vertices the target is the surviving model, so the
/// endpoints reproduce the unmerged models exactly; interior points use ft
/// as the target.
SweepResult interpolation_curve(const Checkpoint& pre, const Checkpoint& ft,
                                const std::optional<FisherDiagonal>& pre_fisher,
                                const std::optional<FisherDiagonal>& ft_fisher,
                                const ModelSpec& model, const LabeledDataset& iid_data,
                                const LabeledDataset& ood_data, double step,
                                CurveMode mode = CurveMode::Both, double epsilon = 1e-12);

std::string sweep_result_to_json(const SweepResult& result);
SweepResult sweep_result_from_json(const std::string& text);
std::string sweep_result_to_csv(const SweepResult& result);
SweepResult sweep_result_from_csv(const std::string& text);

void save_sweep_result_json(const SweepResult& result, const std::filesystem::path& path);
void save_sweep_result_csv(const SweepResult& result, const std::filesystem::path& path);

}  // namespace fishmerge

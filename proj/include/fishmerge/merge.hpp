#pragma once

#include "fishmerge/checkpoint.hpp"
#include "fishmerge/fisher.hpp"
#include "fishmerge/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fishmerge {

enum class MergeMode { Isotropic, Fisher };

struct MergeInput {
    ParameterSet params;
    RoleTags tags;
    std::optional<FisherDiagonal> fisher;
    double lambda = 0.0;
};

/// Inputs plus merging policy. Construction normalizes the lambdas to the
/// simplex (hard error on all-zero), checks mutual merge compatibility and
/// caches the mergeable-name partition.
struct MergeSpec {
    std::vector<MergeInput> inputs;
    std::size_t target_index = 0;
    double epsilon = 1e-12;  // floor for the lambda-weighted Fisher sum
    MergeMode mode = MergeMode::Isotropic;
    // When a denominator underflows, default is the target model's value;
    // this switches to the lambda-weighted plain average instead.
    bool fallback_plain_average = false;

    CompatibilityPartition partition;

    static MergeSpec create(std::vector<MergeInput> inputs, std::size_t target_index,
                            MergeMode mode, double epsilon = 1e-12,
                            bool fallback_plain_average = false);

    std::size_t size() const { return inputs.size(); }
};

struct MergeReport {
    ParameterSet merged;
    RoleTags merged_tags;
    std::int64_t n_fallback_entries = 0;
    double objective_value = 0.0;
    std::map<std::string, std::int64_t> per_tensor_fallbacks;

    /// Metadata view (tensor data stays in the checkpoint file).
    std::string to_json(const MergeSpec& spec) const;
};

/// theta*(j) = sum_i lambda_i theta_i(j) on mergeable coordinates; private
/// and head tensors are copied verbatim from the target input.
MergeReport merge_isotropic(const MergeSpec& spec);

/// theta*(j) = sum_i lambda_i F_i(j) theta_i(j) / sum_i lambda_i F_i(j)
/// wherever the denominator is >= epsilon; below it the coordinate falls
/// back to the target value and the fallback counter increments.
MergeReport merge_fisher(const MergeSpec& spec);

/// Weighted joint Gaussian log-posterior over the mergeable coordinates,
/// dropping theta-independent constants:
///   -1/2 sum_i lambda_i sum_j F_i(j) (theta(j) - theta_i(j))^2
/// with F_i == 1 in isotropic mode. merge_fisher maximizes this.
double merge_objective(const ParameterSet& theta, const MergeSpec& spec);

}  // namespace fishmerge

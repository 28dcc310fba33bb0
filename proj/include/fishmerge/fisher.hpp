#pragma once

#include "fishmerge/checkpoint.hpp"
#include "fishmerge/dataset.hpp"
#include "fishmerge/model.hpp"
#include "fishmerge/types.hpp"

#include <filesystem>

namespace fishmerge {

enum class FisherMode { Exact, Sampled };

/// Diagonal Fisher information, shape-congruent with the source parameters.
/// Every entry is a mean of squared log-probability gradients, hence >= 0.
struct FisherDiagonal {
    NamedTensors entries;
    std::int64_t n_examples_used = 0;
    FisherMode mode = FisherMode::Exact;
    std::int64_t k = 0;  // samples per example when mode == Sampled
    std::string lineage_id;
};

struct FisherConfig {
    std::int64_t n_examples = 4096;
    std::int64_t k = 1;  // used by the sampled estimator
    std::uint64_t seed = 0;
};

void validate(const FisherDiagonal& fisher);

/// F^(j) = (1/N) sum_i sum_y p(y|x_i) (d/dtheta_j log p(y|x_i))^2 with the
/// class expectation enumerated exactly. Examples are the first N rows of a
/// seeded shuffle of data; if N exceeds the dataset the whole set is used
/// once and n_examples_used records the actual count.
FisherDiagonal estimate_fisher_exact(const ModelSpec& spec, const ParameterSet& params,
                                     const LabeledDataset& data, const FisherConfig& config);

/// Same estimand with the inner expectation replaced by the mean of K
/// Monte-Carlo draws y ~ p(y|x_i); deterministic given config.seed.
FisherDiagonal estimate_fisher_sampled(const ModelSpec& spec, const ParameterSet& params,
                                       const LabeledDataset& data, const FisherConfig& config);

/// Empirical mean over data of KL(p_theta(.|x) || p_theta+delta(.|x)).
/// Test oracle for the curvature reading of the Fisher: the value should
/// approach 1/2 sum_j F^(j) delta_j^2 for small perturbations.
double expected_kl_under_perturbation(const ModelSpec& spec, const ParameterSet& params,
                                      const NamedTensors& delta, const LabeledDataset& data);

/// Fisher files reuse the checkpoint format with fisher=true in the header.
void save_fisher(const FisherDiagonal& fisher, const RoleTags& role_tags,
                 const std::filesystem::path& path);
FisherDiagonal load_fisher(const std::filesystem::path& path);

}  // namespace fishmerge

#pragma once

#include "fishmerge/dataset.hpp"
#include "fishmerge/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fishmerge {

enum class Activation { Tanh, Relu, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& s);

struct HiddenLayer {
    int width;
    Activation act;
};

/// Architecture of a feed-forward softmax classifier. Hidden layers are
/// named h0, h1, ...; the final linear layer is named head_name and is the
/// tensor pair treated as the unmergeable head by default.
struct ModelSpec {
    int input_dim = 0;
    std::vector<HiddenLayer> hidden;
    int num_classes = 0;
    std::string head_name = "head";
};

void validate(const ModelSpec& spec);

/// Canonical parameter naming: "<layer>.W" with shape [out, in] (row-major)
/// and "<layer>.b" with shape [out].
NamedTensors zero_params_like(const ModelSpec& spec);

/// Head tensors tagged Head, everything else Body.
RoleTags default_role_tags(const ModelSpec& spec);

/// Deterministic init: weights uniform in ±sqrt(3/fan_in), biases zero.
/// lineage_id is derived from the spec and seed, so equal (spec, seed)
/// pairs share a lineage and anything else does not.
ParameterSet init_params(const ModelSpec& spec, std::uint64_t seed);

struct PredictiveDistribution {
    Vector log_probs;
};

/// Forward/backward scratch; reuse across calls to avoid reallocation.
struct Workspace {
    Vector x;
    std::vector<Vector> pre;
    std::vector<Vector> post;
    Vector logits;
    Vector log_probs;
    Vector dz;
    Vector dh;
    Vector dpre;
};

/// Stable log-softmax output (max-subtraction); exp(log_probs) sums to 1.
PredictiveDistribution forward(const ModelSpec& spec, const ParameterSet& params,
                               const Eigen::Ref<const Vector>& x);

/// Forward pass that records activations for a later backward call.
/// Skips parameter-shape validation; callers validate once up front via
/// require_matching_shapes.
void forward_trace(const ModelSpec& spec, const ParameterSet& params,
                   const Eigen::Ref<const Vector>& x, Workspace& ws);

/// Accumulate scale * g (or scale * g*g when squared) into out, where g is
/// the exact reverse-mode gradient of log p(y|x) at the workspace's last
/// forward_trace. Reuses ws scratch; out must be congruent with params.
void log_prob_backward(const ModelSpec& spec, const ParameterSet& params, Workspace& ws, int y,
                       double scale, bool squared, NamedTensors& out);

/// Exact gradient of log p(y|x) with respect to every parameter tensor.
NamedTensors per_example_grad(const ModelSpec& spec, const ParameterSet& params,
                              const Eigen::Ref<const Vector>& x, int y);

/// Argmax accuracy over the first min(limit, n) examples; argmax ties break
/// toward the lowest class index.
double evaluate(const ModelSpec& spec, const ParameterSet& params, const LabeledDataset& data,
                std::optional<std::int64_t> limit = std::nullopt);

/// Mean negative log-likelihood over the first min(limit, n) examples.
double mean_nll(const ModelSpec& spec, const ParameterSet& params, const LabeledDataset& data,
                std::optional<std::int64_t> limit = std::nullopt);

/// Throws unless params carries exactly the names and shapes of spec.
void require_matching_shapes(const ModelSpec& spec, const ParameterSet& params);

}  // namespace fishmerge

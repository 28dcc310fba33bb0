#pragma once

#include "fishmerge/dataset.hpp"
#include "fishmerge/model.hpp"
#include "fishmerge/types.hpp"

#include <string>
#include <vector>

namespace fishmerge {

enum class Optimizer { Sgd, Adam };

std::string optimizer_name(Optimizer o);
Optimizer optimizer_from_name(const std::string& s);

struct TrainConfig {
    Optimizer optimizer = Optimizer::Adam;
    double learning_rate = 1e-2;
    int batch_size = 32;
    int epochs = 50;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

void validate(const TrainConfig& config);

struct TrainResult {
    ParameterSet params;
    std::vector<double> epoch_losses;  // mean NLL per epoch, at visit time
};

/// Minibatch gradient descent on the mean negative log-likelihood.
/// Deterministic given (spec, init, data, config); lineage_id is preserved
/// from the initialization. Errors out if the loss goes non-finite.
TrainResult train(const ModelSpec& spec, const ParameterSet& init, const LabeledDataset& data,
                  const TrainConfig& config);

/// Fine-tuning start point: tensors whose name and shape match the spec's
/// scheme are copied from source; the rest (typically the head after a class
/// count change) are freshly initialized. Lineage is preserved.
ParameterSet adapt_to_spec(const ModelSpec& spec, const ParameterSet& source,
                           std::uint64_t head_seed);

struct Task {
    std::string name;
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
};

/// A shared initialization plus related synthetic tasks (two-moons and
/// Gaussian-blob variants under rotation/translation), all with the same
/// input_dim and num_classes so any pair of trained models can be merged.
struct TaskSuite {
    ModelSpec model;
    ParameterSet shared_init;
    std::vector<Task> tasks;
};

TaskSuite make_task_suite(std::uint64_t seed);

}  // namespace fishmerge

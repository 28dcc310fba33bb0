#pragma once

#include <cstdint>
#include <string>

namespace fishmerge {

/// FLOPs accounting following the 6PT-train / 2PT-inference heuristic.
struct CostEstimate {
    double train_flops = 0.0;
    double fisher_flops = 0.0;
    double merge_flops = 0.0;
    double eval_flops = 0.0;

    std::string to_json() const;
};

/// train = 6*P*train_tokens; fisher = 6*P*fisher_examples*tokens_per_example
/// (one per-example gradient costs about one training step); eval =
/// 2*P*eval_tokens; merge = 3*P*n_models (multiply-accumulate plus divide
/// per coordinate per model).
CostEstimate estimate_costs(std::int64_t param_count, std::int64_t train_tokens,
                            std::int64_t fisher_examples, std::int64_t tokens_per_example,
                            std::int64_t eval_tokens, std::int64_t n_models = 2);

}  // namespace fishmerge

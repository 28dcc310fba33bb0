#include "fishmerge/cost.hpp"

#include "fishmerge/types.hpp"

#include <nlohmann/json.hpp>

namespace fishmerge {

CostEstimate estimate_costs(std::int64_t param_count, std::int64_t train_tokens,
                            std::int64_t fisher_examples, std::int64_t tokens_per_example,
                            std::int64_t eval_tokens, std::int64_t n_models) {
    if (param_count < 0 || train_tokens < 0 || fisher_examples < 0 || tokens_per_example < 0 ||
        eval_tokens < 0 || n_models < 0)
        throw DataError("estimate_costs: inputs must be nonnegative");
    const double p = static_cast<double>(param_count);
    CostEstimate est;
    est.train_flops = 6.0 * p * static_cast<double>(train_tokens);
    est.fisher_flops =
        6.0 * p * static_cast<double>(fisher_examples) * static_cast<double>(tokens_per_example);
    est.eval_flops = 2.0 * p * static_cast<double>(eval_tokens);
    est.merge_flops = 3.0 * p * static_cast<double>(n_models);
    return est;
}

std::string CostEstimate::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["train_flops"] = train_flops;
    j["fisher_flops"] = fisher_flops;
    j["merge_flops"] = merge_flops;
    j["eval_flops"] = eval_flops;
    return j.dump(2);
}

}  // namespace fishmerge

#include "fishmerge/merge.hpp"

#include "fishmerge/sum.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace fishmerge {

namespace {

// Scale-canonicalized simplex normalization: dividing by the max first keeps
// the result identical when all lambdas are scaled by a common constant.
std::vector<double> normalize_lambdas(const std::vector<double>& raw) {
    double max_l = 0.0;
    for (const double l : raw) {
        if (l < 0.0 || !std::isfinite(l)) throw DataError("merge: lambda must be finite and >= 0");
        max_l = std::max(max_l, l);
    }
    if (max_l == 0.0) throw DataError("merge: all lambdas are zero");
    std::vector<double> u(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) u[i] = raw[i] / max_l;
    const double total = sorted_sum(u);
    for (double& v : u) v /= total;
    return u;
}

}  // namespace

MergeSpec MergeSpec::create(std::vector<MergeInput> inputs, std::size_t target_index,
                            MergeMode mode, double epsilon, bool fallback_plain_average) {
    if (inputs.empty()) throw DataError("merge: empty input list");
    if (target_index >= inputs.size()) throw DataError("merge: target_index out of range");
    if (!(epsilon > 0.0)) throw DataError("merge: epsilon must be > 0");

    std::vector<double> raw;
    raw.reserve(inputs.size());
    for (const auto& in : inputs) raw.push_back(in.lambda);
    const auto normalized = normalize_lambdas(raw);
    for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].lambda = normalized[i];

    std::vector<Checkpoint> sets;
    sets.reserve(inputs.size());
    for (const auto& in : inputs) {
        validate(in.params);
        sets.push_back(Checkpoint{in.params, in.tags});
    }
    auto partition = check_merge_compatibility(sets);

    for (const auto& in : inputs) {
        if (mode == MergeMode::Fisher) {
            if (!in.fisher) throw DataError("merge: missing Fisher diagonal in fisher mode");
            validate(*in.fisher);
            require_congruent(in.params.entries, in.fisher->entries, "merge: fisher");
            if (in.fisher->lineage_id != in.params.lineage_id)
                throw DataError("merge: fisher/checkpoint lineage mismatch");
        }
    }

    MergeSpec spec;
    spec.inputs = std::move(inputs);
    spec.target_index = target_index;
    spec.epsilon = epsilon;
    spec.mode = mode;
    spec.fallback_plain_average = fallback_plain_average;
    spec.partition = std::move(partition);
    return spec;
}

namespace {

MergeReport run_merge(const MergeSpec& spec, bool use_fisher) {
    const std::size_t m = spec.size();
    const MergeInput& target = spec.inputs[spec.target_index];

    MergeReport report;
    report.merged.lineage_id = target.params.lineage_id;
    report.merged.entries = target.params.entries;  // private/head tensors pass through
    report.merged_tags = target.tags;

    // Inputs with lambda == 0 contribute nothing; excluding them makes the
    // lambda-vertex merges reproduce the corresponding model bit-exactly.
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < m; ++i) {
        if (spec.inputs[i].lambda > 0.0) active.push_back(i);
    }

    std::vector<double> num_terms(active.size());
    std::vector<double> den_terms(active.size());
    std::vector<double> raw_terms(active.size());

    std::vector<const double*> theta_ptr(active.size());
    std::vector<const double*> fisher_ptr(active.size());
    std::vector<double> lambda(active.size());

    for (const auto& name : spec.partition.mergeable) {
        Tensor& out = report.merged.entries.at(name);
        for (std::size_t a = 0; a < active.size(); ++a) {
            const auto& in = spec.inputs[active[a]];
            theta_ptr[a] = in.params.entries.at(name).data.data();
            fisher_ptr[a] = use_fisher ? in.fisher->entries.at(name).data.data() : nullptr;
            lambda[a] = in.lambda;
        }

        std::int64_t fallbacks = 0;
        for (std::int64_t j = 0; j < out.data.size(); ++j) {
            bool fallback = false;
            if (use_fisher) {
                for (std::size_t a = 0; a < active.size(); ++a)
                    raw_terms[a] = lambda[a] * fisher_ptr[a][j];
                fallback = sorted_sum_inplace(raw_terms) < spec.epsilon;
            }

            if (fallback) {
                ++fallbacks;
                if (spec.fallback_plain_average) {
                    for (std::size_t a = 0; a < active.size(); ++a) {
                        num_terms[a] = lambda[a] * theta_ptr[a][j];
                        den_terms[a] = lambda[a];
                    }
                    out.data[j] = sorted_sum_inplace(num_terms) / sorted_sum_inplace(den_terms);
                }
                // otherwise keep the target's value already present in out
                continue;
            }

            double theta_min = std::numeric_limits<double>::infinity();
            double theta_max = -theta_min;
            double max_f = 0.0;
            if (use_fisher) {
                for (std::size_t a = 0; a < active.size(); ++a)
                    max_f = std::max(max_f, fisher_ptr[a][j]);
            }
            for (std::size_t a = 0; a < active.size(); ++a) {
                const double theta = theta_ptr[a][j];
                // Canonicalizing the Fisher by its per-coordinate max makes
                // equal Fishers reduce to the isotropic weights exactly.
                const double w = use_fisher ? lambda[a] * (fisher_ptr[a][j] / max_f) : lambda[a];
                num_terms[a] = w * theta;
                den_terms[a] = w;
                theta_min = std::min(theta_min, theta);
                theta_max = std::max(theta_max, theta);
            }
            const double value = sorted_sum_inplace(num_terms) / sorted_sum_inplace(den_terms);
            out.data[j] = std::clamp(value, theta_min, theta_max);
        }
        if (fallbacks > 0) report.per_tensor_fallbacks[name] = fallbacks;
        report.n_fallback_entries += fallbacks;
    }

    report.objective_value = merge_objective(report.merged, spec);
    return report;
}

}  // namespace

MergeReport merge_isotropic(const MergeSpec& spec) {
    if (spec.mode != MergeMode::Isotropic)
        throw DataError("merge_isotropic: spec mode is not isotropic");
    return run_merge(spec, false);
}

MergeReport merge_fisher(const MergeSpec& spec) {
    if (spec.mode != MergeMode::Fisher) throw DataError("merge_fisher: spec mode is not fisher");
    return run_merge(spec, true);
}

double merge_objective(const ParameterSet& theta, const MergeSpec& spec) {
    KahanSum total;
    for (const auto& name : spec.partition.mergeable) {
        const auto it = theta.entries.find(name);
        if (it == theta.entries.end())
            throw DataError("merge_objective: theta is missing tensor \"" + name + "\"");
        const Tensor& t = it->second;
        if (!t.same_shape(spec.inputs.front().params.entries.at(name)))
            throw DataError("merge_objective: shape mismatch on \"" + name + "\"");
        for (const auto& in : spec.inputs) {
            const Tensor& ti = in.params.entries.at(name);
            for (std::int64_t j = 0; j < t.data.size(); ++j) {
                const double f =
                    spec.mode == MergeMode::Fisher ? in.fisher->entries.at(name).data[j] : 1.0;
                const double r = t.data[j] - ti.data[j];
                total.add(-0.5 * in.lambda * f * r * r);
            }
        }
    }
    return total.value();
}

std::string MergeReport::to_json(const MergeSpec& spec) const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["mode"] = spec.mode == MergeMode::Fisher ? "fisher" : "isotropic";
    j["epsilon"] = spec.epsilon;
    j["target_index"] = spec.target_index;
    j["fallback_plain_average"] = spec.fallback_plain_average;
    std::vector<double> lambdas;
    for (const auto& in : spec.inputs) lambdas.push_back(in.lambda);
    j["lambdas"] = lambdas;
    j["lineage_id"] = merged.lineage_id;
    j["n_fallback_entries"] = n_fallback_entries;
    j["objective_value"] = objective_value;
    j["per_tensor_fallbacks"] = per_tensor_fallbacks;
    j["mergeable_tensors"] = spec.partition.mergeable;
    return j.dump(2);
}

}  // namespace fishmerge

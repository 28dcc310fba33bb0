#include "fishmerge/ensemble.hpp"

#include "fishmerge/merge.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace fishmerge {

PredictiveDistribution predict_output_ensemble(std::span<const EnsembleMember> members,
                                               const Eigen::Ref<const Vector>& x) {
    if (members.empty()) throw DataError("ensemble: no members");
    const int classes = members.front().spec.num_classes;
    for (const auto& m : members) {
        if (m.spec.num_classes != classes) throw DataError("ensemble: class-count mismatch");
        if (m.spec.input_dim != members.front().spec.input_dim)
            throw DataError("ensemble: input_dim mismatch");
    }

    Array mean = Array::Zero(classes);
    Workspace ws;
    for (const auto& m : members) {
        forward_trace(m.spec, m.params, x, ws);
        for (int c = 0; c < classes; ++c) mean[c] += std::exp(ws.log_probs[c]);
    }
    mean /= static_cast<double>(members.size());

    PredictiveDistribution out;
    out.log_probs.resize(classes);
    // Floor at the smallest positive double so outputs stay finite even when
    // every member assigns an underflowed-zero probability to a class.
    const double floor = std::numeric_limits<double>::denorm_min();
    for (int c = 0; c < classes; ++c) out.log_probs[c] = std::log(std::max(mean[c], floor));
    return out;
}

double output_ensemble_accuracy(std::span<const EnsembleMember> members,
                                const LabeledDataset& data) {
    if (data.n() == 0) throw DataError("ensemble: empty dataset");
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < data.n(); ++i) {
        const auto dist = predict_output_ensemble(members, data.features.row(i).transpose());
        int argmax = 0;
        for (int c = 1; c < dist.log_probs.size(); ++c)
            if (dist.log_probs[c] > dist.log_probs[argmax]) argmax = c;
        if (argmax == data.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.n());
}

EnsembleReport ensemble_compare(std::span<const Checkpoint> checkpoints,
                                std::span<const FisherDiagonal> fishers, const ModelSpec& model,
                                const LabeledDataset& test_data, double epsilon) {
    if (checkpoints.size() < 2) throw DataError("ensemble_compare: need at least two models");
    if (fishers.size() != checkpoints.size())
        throw DataError("ensemble_compare: checkpoint/fisher count mismatch");

    const std::size_t m = checkpoints.size();
    const double weight = 1.0 / static_cast<double>(m);

    EnsembleReport report;
    report.lambdas.assign(m, weight);
    report.inference_cost_ratio = static_cast<std::int64_t>(m);

    std::vector<EnsembleMember> members;
    for (const auto& c : checkpoints) {
        report.individual.push_back(evaluate(model, c.params, test_data));
        members.push_back(EnsembleMember{model, c.params});
    }
    report.output_ensemble = output_ensemble_accuracy(members, test_data);

    auto build = [&](MergeMode mode) {
        std::vector<MergeInput> inputs;
        for (std::size_t i = 0; i < m; ++i) {
            MergeInput in;
            in.params = checkpoints[i].params;
            in.tags = checkpoints[i].tags;
            if (mode == MergeMode::Fisher) in.fisher = fishers[i];
            in.lambda = weight;
            inputs.push_back(std::move(in));
        }
        return MergeSpec::create(std::move(inputs), 0, mode, epsilon);
    };

    const MergeReport iso = merge_isotropic(build(MergeMode::Isotropic));
    report.isotropic_merged = evaluate(model, iso.merged, test_data);

    const MergeReport fish = merge_fisher(build(MergeMode::Fisher));
    report.fisher_merged = evaluate(model, fish.merged, test_data);
    report.fisher_fallback_entries = fish.n_fallback_entries;
    return report;
}

std::string EnsembleReport::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["fisher_merged"] = fisher_merged;
    j["isotropic_merged"] = isotropic_merged;
    j["output_ensemble"] = output_ensemble;
    j["individual"] = individual;
    j["lambdas"] = lambdas;
    j["inference_cost_ratio"] =
        std::to_string(inference_cost_ratio) + ":1";
    j["fisher_fallback_entries"] = fisher_fallback_entries;
    return j.dump(2);
}

std::string EnsembleReport::to_csv() const {
    std::ostringstream os;
    os << "method,accuracy\n";
    char buf[64];
    const auto row = [&](const std::string& name, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << name << "," << buf << "\n";
    };
    row("fisher_merged", fisher_merged);
    row("isotropic_merged", isotropic_merged);
    row("output_ensemble", output_ensemble);
    for (std::size_t i = 0; i < individual.size(); ++i)
        row("individual" + std::to_string(i), individual[i]);
    return os.str();
}

}  // namespace fishmerge

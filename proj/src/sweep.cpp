#include "fishmerge/sweep.hpp"

#include "fishmerge/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fishmerge {

std::vector<std::vector<double>> lambda_grid(int m, int n_points, std::uint64_t seed) {
    if (m < 2) throw DataError("lambda_grid: need at least two models");
    if (n_points < 2) throw DataError("lambda_grid: need at least two points");

    std::vector<std::vector<double>> grid;
    if (m == 2) {
        grid.reserve(static_cast<std::size_t>(n_points));
        for (int i = 0; i < n_points; ++i) {
            const double l1 = static_cast<double>(i) / static_cast<double>(n_points - 1);
            grid.push_back({l1, 1.0 - l1});
        }
        return grid;
    }

    for (int v = 0; v < m; ++v) {
        std::vector<double> vertex(static_cast<std::size_t>(m), 0.0);
        vertex[static_cast<std::size_t>(v)] = 1.0;
        grid.push_back(std::move(vertex));
    }
    grid.emplace_back(static_cast<std::size_t>(m), 1.0 / static_cast<double>(m));

    Rng rng(seed);
    for (int p = 0; p < n_points; ++p) {
        std::vector<double> draw(static_cast<std::size_t>(m));
        double total = 0.0;
        for (double& v : draw) {
            v = -std::log(1.0 - rng.uniform01());
            total += v;
        }
        for (double& v : draw) v /= total;
        grid.push_back(std::move(draw));
    }
    return grid;
}

namespace {

MergeSpec instantiate(const MergeTemplate& tmpl, const std::vector<double>& lambdas,
                      std::size_t target_index) {
    if (lambdas.size() != tmpl.entries.size())
        throw DataError("sweep: lambda vector length does not match input count");
    std::vector<MergeInput> inputs;
    inputs.reserve(tmpl.entries.size());
    for (std::size_t i = 0; i < tmpl.entries.size(); ++i) {
        MergeInput in;
        in.params = tmpl.entries[i].params;
        in.tags = tmpl.entries[i].tags;
        in.fisher = tmpl.entries[i].fisher;
        in.lambda = lambdas[i];
        inputs.push_back(std::move(in));
    }
    return MergeSpec::create(std::move(inputs), target_index, tmpl.mode, tmpl.epsilon);
}

MergeReport run(const MergeSpec& spec) {
    return spec.mode == MergeMode::Fisher ? merge_fisher(spec) : merge_isotropic(spec);
}

std::string lambda_string(const std::vector<double>& l) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < l.size(); ++i) os << (i ? ", " : "") << l[i];
    os << ")";
    return os.str();
}

std::size_t select_best(const std::vector<SweepPoint>& points, const std::string& metric,
                        std::size_t target_index) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double cur = points[i].metrics.at(metric);
        const double top = points[best].metrics.at(metric);
        if (cur > top) {
            best = i;
        } else if (cur == top &&
                   points[i].lambdas[target_index] > points[best].lambdas[target_index]) {
            best = i;
        }
    }
    return best;
}

}  // namespace

SweepResult sweep(const MergeTemplate& tmpl, const ModelSpec& model,
                  const std::vector<std::vector<double>>& grid, const LabeledDataset& val_data,
                  const std::string& selection_metric, std::int64_t val_limit) {
    if (grid.empty()) throw DataError("sweep: empty grid");
    if (selection_metric != "acc" && selection_metric != "nll_neg")
        throw DataError("sweep: unknown selection metric \"" + selection_metric + "\"");

    SweepResult result;
    result.selection_metric = selection_metric;
    for (const auto& lambdas : grid) {
        try {
            const MergeSpec spec = instantiate(tmpl, lambdas, tmpl.target_index);
            const MergeReport report = run(spec);
            SweepPoint point;
            for (const auto& in : spec.inputs) point.lambdas.push_back(in.lambda);
            point.metrics["acc"] = evaluate(model, report.merged, val_data, val_limit);
            point.metrics["nll_neg"] = -mean_nll(model, report.merged, val_data, val_limit);
            point.metrics["n_fallback"] = static_cast<double>(report.n_fallback_entries);
            result.points.push_back(std::move(point));
        } catch (const NumericalError& e) {
            throw NumericalError("sweep failed at lambda " + lambda_string(lambdas) + ": " +
                                 e.what());
        } catch (const DataError& e) {
            throw DataError("sweep failed at lambda " + lambda_string(lambdas) + ": " + e.what());
        }
    }
    result.best_index = select_best(result.points, selection_metric, tmpl.target_index);
    return result;
}

SweepResult interpolation_curve(const Checkpoint& pre, const Checkpoint& ft,
                                const std::optional<FisherDiagonal>& pre_fisher,
                                const std::optional<FisherDiagonal>& ft_fisher,
                                const ModelSpec& model, const LabeledDataset& iid_data,
                                const LabeledDataset& ood_data, double step, CurveMode mode,
                                double epsilon) {
    if (!(step > 0.0 && step <= 1.0)) throw DataError("curve: step must be in (0, 1]");
    const double k_real = 1.0 / step;
    const std::int64_t k = std::llround(k_real);
    if (std::abs(k_real - static_cast<double>(k)) > 1e-9)
        throw DataError("curve: step must divide 1 evenly");
    const bool want_iso = mode != CurveMode::Fisher;
    const bool want_fisher = mode != CurveMode::Isotropic;
    if (want_fisher && (!pre_fisher || !ft_fisher))
        throw DataError("curve: fisher mode requires both Fisher diagonals");

    SweepResult result;
    result.selection_metric = want_fisher ? "ood_acc_fisher" : "ood_acc_iso";

    for (std::int64_t i = 0; i <= k; ++i) {
        const double l1 = static_cast<double>(i) / static_cast<double>(k);
        // Vertices take the surviving model as target so the endpoints
        // reproduce the unmerged models bit-exactly.
        const std::size_t target = (l1 == 1.0) ? 0 : 1;

        SweepPoint point;
        point.lambdas = {l1, 1.0 - l1};
        auto run_mode = [&](MergeMode mm, const std::string& suffix) {
            std::vector<MergeInput> inputs(2);
            inputs[0] = MergeInput{pre.params, pre.tags,
                                   mm == MergeMode::Fisher ? pre_fisher : std::nullopt, l1};
            inputs[1] = MergeInput{ft.params, ft.tags,
                                   mm == MergeMode::Fisher ? ft_fisher : std::nullopt, 1.0 - l1};
            const MergeSpec spec = MergeSpec::create(std::move(inputs), target, mm, epsilon);
            const MergeReport report = run(spec);
            point.metrics["iid_acc_" + suffix] = evaluate(model, report.merged, iid_data);
            point.metrics["ood_acc_" + suffix] = evaluate(model, report.merged, ood_data);
            point.metrics["n_fallback_" + suffix] =
                static_cast<double>(report.n_fallback_entries);
        };
        try {
            if (want_iso) run_mode(MergeMode::Isotropic, "iso");
            if (want_fisher) run_mode(MergeMode::Fisher, "fisher");
        } catch (const NumericalError& e) {
            throw NumericalError("curve failed at lambda1=" + std::to_string(l1) + ": " +
                                 e.what());
        } catch (const DataError& e) {
            throw DataError("curve failed at lambda1=" + std::to_string(l1) + ": " + e.what());
        }
        result.points.push_back(std::move(point));
    }
    result.best_index = select_best(result.points, result.selection_metric, 1);
    return result;
}

namespace {
constexpr int kSchemaVersion = 1;
}

std::string sweep_result_to_json(const SweepResult& result) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["selection_metric"] = result.selection_metric;
    j["best_index"] = result.best_index;
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : result.points) {
        nlohmann::json jp;
        jp["lambdas"] = p.lambdas;
        jp["metrics"] = p.metrics;
        points.push_back(std::move(jp));
    }
    j["points"] = std::move(points);
    return j.dump(2);
}

SweepResult sweep_result_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("schema_version").get<int>() != kSchemaVersion)
            throw DataError("sweep result: unsupported schema version");
        SweepResult result;
        result.selection_metric = j.at("selection_metric").get<std::string>();
        result.best_index = j.at("best_index").get<std::size_t>();
        for (const auto& jp : j.at("points")) {
            SweepPoint p;
            p.lambdas = jp.at("lambdas").get<std::vector<double>>();
            p.metrics = jp.at("metrics").get<std::map<std::string, double>>();
            result.points.push_back(std::move(p));
        }
        return result;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("sweep result: malformed json: " + std::string(e.what()));
    }
}

std::string sweep_result_to_csv(const SweepResult& result) {
    if (result.points.empty()) throw DataError("sweep result: no points");
    std::ostringstream os;
    os << "# fishmerge-sweep v" << kSchemaVersion << " selection=" << result.selection_metric
       << " best=" << result.best_index << "\n";
    const auto& first = result.points.front();
    for (std::size_t i = 0; i < first.lambdas.size(); ++i) os << "lambda" << i << ",";
    std::size_t col = 0;
    for (const auto& [name, value] : first.metrics)
        os << name << (++col == first.metrics.size() ? "" : ",");
    os << "\n";
    char buf[64];
    for (const auto& p : result.points) {
        for (const double l : p.lambdas) {
            std::snprintf(buf, sizeof buf, "%.17g", l);
            os << buf << ",";
        }
        col = 0;
        for (const auto& [name, value] : p.metrics) {
            std::snprintf(buf, sizeof buf, "%.17g", value);
            os << buf << (++col == p.metrics.size() ? "" : ",");
        }
        os << "\n";
    }
    return os.str();
}

SweepResult sweep_result_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    const std::string expected_prefix = "# fishmerge-sweep v" + std::to_string(kSchemaVersion) + " ";
    if (!std::getline(in, line)) throw DataError("sweep result csv: empty file");
    if (line.rfind("# fishmerge-sweep v", 0) != 0)
        throw DataError("sweep result csv: missing version comment");
    if (line.rfind(expected_prefix, 0) != 0)
        throw DataError("sweep result csv: unsupported version");
    SweepResult result;
    {
        std::istringstream meta(line.substr(expected_prefix.size()));
        std::string tok;
        while (meta >> tok) {
            if (tok.rfind("selection=", 0) == 0) result.selection_metric = tok.substr(10);
            if (tok.rfind("best=", 0) == 0) result.best_index = std::stoul(tok.substr(5));
        }
    }
    if (!std::getline(in, line)) throw DataError("sweep result csv: missing header");
    std::vector<std::string> cols;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) cols.push_back(cell);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        SweepPoint p;
        std::istringstream ls(line);
        std::string cell;
        std::size_t idx = 0;
        while (std::getline(ls, cell, ',')) {
            if (idx >= cols.size()) throw DataError("sweep result csv: extra column");
            const double v = std::stod(cell);
            if (cols[idx].rfind("lambda", 0) == 0)
                p.lambdas.push_back(v);
            else
                p.metrics[cols[idx]] = v;
            ++idx;
        }
        if (idx != cols.size()) throw DataError("sweep result csv: missing column");
        result.points.push_back(std::move(p));
    }
    if (result.points.empty()) throw DataError("sweep result csv: no points");
    return result;
}

void save_sweep_result_json(const SweepResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("unwritable path: " + path.string());
    out << sweep_result_to_json(result) << "\n";
}

void save_sweep_result_csv(const SweepResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("unwritable path: " + path.string());
    out << sweep_result_to_csv(result);
}

}  // namespace fishmerge

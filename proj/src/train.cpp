#include "fishmerge/train.hpp"

#include "fishmerge/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace fishmerge {

std::string optimizer_name(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

Optimizer optimizer_from_name(const std::string& s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    throw DataError("unknown optimizer: " + s);
}

void validate(const TrainConfig& config) {
    if (!(config.learning_rate > 0.0)) throw DataError("train: learning_rate must be > 0");
    if (config.batch_size < 1) throw DataError("train: batch_size must be >= 1");
    if (config.epochs < 0) throw DataError("train: epochs must be >= 0");
    if (!(config.adam_beta1 >= 0.0 && config.adam_beta1 < 1.0) ||
        !(config.adam_beta2 >= 0.0 && config.adam_beta2 < 1.0))
        throw DataError("train: adam betas must be in [0, 1)");
    if (!(config.adam_eps > 0.0)) throw DataError("train: adam_eps must be > 0");
}

TrainResult train(const ModelSpec& spec, const ParameterSet& init, const LabeledDataset& data,
                  const TrainConfig& config) {
    validate(config);
    require_matching_shapes(spec, init);
    validate(data);
    if (data.n() == 0) throw DataError("train: empty dataset");
    if (data.dim() != spec.input_dim) throw DataError("train: dataset/input_dim mismatch");
    for (const int y : data.labels) {
        if (y >= spec.num_classes) throw DataError("train: label out of range");
    }

    TrainResult result;
    result.params = init;
    if (config.epochs == 0) return result;

    NamedTensors grad = zero_params_like(spec);
    NamedTensors m = zero_params_like(spec);
    NamedTensors v = zero_params_like(spec);
    Workspace ws;
    Rng rng(config.seed);

    std::vector<std::int64_t> order(static_cast<std::size_t>(data.n()));
    std::iota(order.begin(), order.end(), 0);

    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::int64_t lo = 0; lo < data.n(); lo += config.batch_size) {
            const std::int64_t hi = std::min<std::int64_t>(lo + config.batch_size, data.n());
            const double inv_b = 1.0 / static_cast<double>(hi - lo);
            for (auto& [name, t] : grad) t.data.setZero();

            double batch_loss = 0.0;
            for (std::int64_t p = lo; p < hi; ++p) {
                const std::int64_t row = order[static_cast<std::size_t>(p)];
                const int y = data.labels[static_cast<std::size_t>(row)];
                forward_trace(spec, result.params, data.features.row(row).transpose(), ws);
                batch_loss -= ws.log_probs[y];
                // NLL gradient: minus the log-prob gradient, folded into the
                // update sign below.
                log_prob_backward(spec, result.params, ws, y, inv_b, false, grad);
            }
            batch_loss *= inv_b;
            if (!std::isfinite(batch_loss))
                throw NumericalError("train: loss diverged (non-finite) at epoch " +
                                     std::to_string(epoch));
            epoch_loss += batch_loss * static_cast<double>(hi - lo);

            ++step;
            if (config.optimizer == Optimizer::Sgd) {
                auto ig = grad.begin();
                for (auto ip = result.params.entries.begin(); ip != result.params.entries.end();
                     ++ip, ++ig)
                    ip->second.data += config.learning_rate * ig->second.data;
            } else {
                const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
                const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
                auto ig = grad.begin();
                auto im = m.begin();
                auto iv = v.begin();
                for (auto ip = result.params.entries.begin(); ip != result.params.entries.end();
                     ++ip, ++ig, ++im, ++iv) {
                    // grad holds d(log p)/dtheta; the NLL gradient is its negation.
                    const Array g = -ig->second.data;
                    Array& mm = im->second.data;
                    Array& vv = iv->second.data;
                    mm = config.adam_beta1 * mm + (1.0 - config.adam_beta1) * g;
                    vv = config.adam_beta2 * vv + (1.0 - config.adam_beta2) * g.square();
                    ip->second.data -= config.learning_rate * (mm / bc1) /
                                       ((vv / bc2).sqrt() + config.adam_eps);
                }
            }
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(data.n()));
    }
    return result;
}

ParameterSet adapt_to_spec(const ModelSpec& spec, const ParameterSet& source,
                           std::uint64_t head_seed) {
    ParameterSet fresh = init_params(spec, head_seed);
    fresh.lineage_id = source.lineage_id;
    for (auto& [name, t] : fresh.entries) {
        const auto it = source.entries.find(name);
        if (it != source.entries.end() && it->second.same_shape(t)) t.data = it->second.data;
    }
    return fresh;
}

namespace {

Matrix rotation(double degrees) {
    const double r = degrees * std::numbers::pi / 180.0;
    Matrix R(2, 2);
    R << std::cos(r), -std::sin(r), std::sin(r), std::cos(r);
    return R;
}

LabeledDataset sample_moons(Rng& rng, std::int64_t n, double noise, double rot_degrees,
                            double shift_x, double shift_y, const std::string& provenance) {
    LabeledDataset data;
    data.features.resize(n, 2);
    data.labels.resize(static_cast<std::size_t>(n));
    const Matrix R = rotation(rot_degrees);
    for (std::int64_t i = 0; i < n; ++i) {
        const int y = rng.uniform01() < 0.5 ? 0 : 1;
        const double t = rng.uniform(0.0, std::numbers::pi);
        Eigen::Vector2d p;
        if (y == 0)
            p << std::cos(t), std::sin(t);
        else
            p << 1.0 - std::cos(t), 0.5 - std::sin(t);
        p += Eigen::Vector2d(rng.normal() * noise, rng.normal() * noise);
        p = R * p;
        p += Eigen::Vector2d(shift_x, shift_y);
        data.features.row(i) = p.transpose();
        data.labels[static_cast<std::size_t>(i)] = y;
    }
    data.provenance = provenance;
    return data;
}

LabeledDataset sample_blobs(Rng& rng, std::int64_t n, double sigma, double rot_degrees,
                            double shift_x, double shift_y, const std::string& provenance) {
    LabeledDataset data;
    data.features.resize(n, 2);
    data.labels.resize(static_cast<std::size_t>(n));
    const Matrix R = rotation(rot_degrees);
    const Eigen::Vector2d centers[2] = {{-1.0, -0.4}, {1.0, 0.4}};
    for (std::int64_t i = 0; i < n; ++i) {
        const int y = rng.uniform01() < 0.5 ? 0 : 1;
        Eigen::Vector2d p = centers[y] + Eigen::Vector2d(rng.normal() * sigma, rng.normal() * sigma);
        p = R * p;
        p += Eigen::Vector2d(shift_x, shift_y);
        data.features.row(i) = p.transpose();
        data.labels[static_cast<std::size_t>(i)] = y;
    }
    data.provenance = provenance;
    return data;
}

}  // namespace

TaskSuite make_task_suite(std::uint64_t seed) {
    TaskSuite suite;
    suite.model.input_dim = 2;
    suite.model.hidden = {{16, Activation::Tanh}};
    suite.model.num_classes = 2;
    suite.model.head_name = "head";
    suite.shared_init = init_params(suite.model, seed);

    struct TaskDef {
        std::string name;
        bool moons;
        double noise_or_sigma;
        double rot;
        double shift_x;
        double shift_y;
    };
    const std::vector<TaskDef> defs = {
        {"moons", true, 0.22, 0.0, 0.0, 0.0},
        {"moons-rot20", true, 0.22, 20.0, 0.0, 0.0},
        {"moons-rot40", true, 0.22, 40.0, 0.0, 0.0},
        {"blobs", false, 0.85, 0.0, 0.0, 0.0},
        {"blobs-shift", false, 0.85, 0.0, 0.5, 0.3},
    };

    const std::int64_t n_train = 768;
    const std::int64_t n_val = 256;
    const std::int64_t n_test = 768;

    Rng base(seed);
    for (std::size_t i = 0; i < defs.size(); ++i) {
        const auto& d = defs[i];
        Rng rng = base.child(1000 + i);
        const auto sample = [&](std::int64_t n, const std::string& split) {
            const std::string prov = d.name + "/" + split + "(seed=" + std::to_string(seed) + ")";
            return d.moons ? sample_moons(rng, n, d.noise_or_sigma, d.rot, d.shift_x, d.shift_y, prov)
                           : sample_blobs(rng, n, d.noise_or_sigma, d.rot, d.shift_x, d.shift_y, prov);
        };
        Task task;
        task.name = d.name;
        task.train = sample(n_train, "train");
        task.val = sample(n_val, "val");
        task.test = sample(n_test, "test");
        suite.tasks.push_back(std::move(task));
    }
    return suite;
}

}  // namespace fishmerge

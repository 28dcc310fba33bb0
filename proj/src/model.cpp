#include "fishmerge/model.hpp"

#include "fishmerge/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace fishmerge {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    throw DataError("bad activation enum");
}

Activation activation_from_name(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw DataError("unknown activation: " + s);
}

namespace {

std::vector<std::string> layer_names(const ModelSpec& spec) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < spec.hidden.size(); ++i)
        names.push_back("h" + std::to_string(i));
    names.push_back(spec.head_name);
    return names;
}

std::vector<std::pair<int, int>> layer_dims(const ModelSpec& spec) {
    std::vector<std::pair<int, int>> dims;  // (out, in)
    int in = spec.input_dim;
    for (const auto& layer : spec.hidden) {
        dims.emplace_back(layer.width, in);
        in = layer.width;
    }
    dims.emplace_back(spec.num_classes, in);
    return dims;
}

std::string canonical_spec_string(const ModelSpec& spec) {
    nlohmann::json j;
    j["input_dim"] = spec.input_dim;
    nlohmann::json hidden = nlohmann::json::array();
    for (const auto& layer : spec.hidden)
        hidden.push_back({{"act", activation_name(layer.act)}, {"width", layer.width}});
    j["hidden"] = std::move(hidden);
    j["num_classes"] = spec.num_classes;
    j["head_name"] = spec.head_name;
    return j.dump();
}

inline double act_forward(Activation a, double v) {
    switch (a) {
        case Activation::Tanh: return std::tanh(v);
        case Activation::Relu: return v > 0.0 ? v : 0.0;
        case Activation::Identity: return v;
    }
    return v;
}

// Derivative in terms of the preactivation; relu'(0) := 0.
inline double act_deriv(Activation a, double pre, double post) {
    switch (a) {
        case Activation::Tanh: return 1.0 - post * post;
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

void resize_workspace(const ModelSpec& spec, Workspace& ws) {
    const std::size_t L = spec.hidden.size();
    ws.pre.resize(L);
    ws.post.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        ws.pre[i].resize(spec.hidden[i].width);
        ws.post[i].resize(spec.hidden[i].width);
    }
    ws.logits.resize(spec.num_classes);
    ws.log_probs.resize(spec.num_classes);
    ws.dz.resize(spec.num_classes);
}

}  // namespace

void validate(const ModelSpec& spec) {
    if (spec.input_dim < 1) throw DataError("model spec: input_dim must be positive");
    if (spec.num_classes < 2) throw DataError("model spec: num_classes must be >= 2");
    if (spec.head_name.empty()) throw DataError("model spec: head_name must be nonempty");
    for (const auto& layer : spec.hidden) {
        if (layer.width < 1) throw DataError("model spec: hidden width must be positive");
    }
    const auto names = layer_names(spec);
    for (std::size_t i = 0; i + 1 < names.size(); ++i) {
        if (names[i] == spec.head_name)
            throw DataError("model spec: head_name collides with hidden layer name");
    }
}

NamedTensors zero_params_like(const ModelSpec& spec) {
    validate(spec);
    NamedTensors out;
    const auto names = layer_names(spec);
    const auto dims = layer_dims(spec);
    for (std::size_t i = 0; i < names.size(); ++i) {
        out.emplace(names[i] + ".W", make_tensor({dims[i].first, dims[i].second}));
        out.emplace(names[i] + ".b", make_tensor({dims[i].first}));
    }
    return out;
}

RoleTags default_role_tags(const ModelSpec& spec) {
    validate(spec);
    RoleTags tags;
    const auto names = layer_names(spec);
    for (std::size_t i = 0; i < names.size(); ++i) {
        const Role role = (i + 1 == names.size()) ? Role::Head : Role::Body;
        tags[names[i] + ".W"] = role;
        tags[names[i] + ".b"] = role;
    }
    return tags;
}

ParameterSet init_params(const ModelSpec& spec, std::uint64_t seed) {
    validate(spec);
    ParameterSet params;
    params.entries = zero_params_like(spec);
    params.lineage_id =
        "lin-" + std::to_string(fnv1a(canonical_spec_string(spec) + "#" + std::to_string(seed)));

    Rng rng(seed ^ fnv1a(canonical_spec_string(spec)));
    const auto names = layer_names(spec);
    const auto dims = layer_dims(spec);
    for (std::size_t i = 0; i < names.size(); ++i) {
        Tensor& w = params.entries.at(names[i] + ".W");
        const double bound = std::sqrt(3.0 / static_cast<double>(dims[i].second));
        for (std::int64_t k = 0; k < w.data.size(); ++k)
            w.data[k] = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return params;
}

void require_matching_shapes(const ModelSpec& spec, const ParameterSet& params) {
    const NamedTensors expected = zero_params_like(spec);
    if (!congruent(expected, params.entries))
        throw DataError("parameters do not match the model spec's naming/shape scheme");
}

void forward_trace(const ModelSpec& spec, const ParameterSet& params,
                   const Eigen::Ref<const Vector>& x, Workspace& ws) {
    if (x.size() != spec.input_dim)
        throw DataError("input dim mismatch: expected " + std::to_string(spec.input_dim) +
                        ", got " + std::to_string(x.size()));
    resize_workspace(spec, ws);
    ws.x = x;

    const auto names = layer_names(spec);
    const Vector* h = &ws.x;
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
        const Tensor& W = params.entries.at(names[i] + ".W");
        const Tensor& b = params.entries.at(names[i] + ".b");
        ws.pre[i].noalias() = W.matrix() * (*h);
        ws.pre[i] += b.vector();
        for (std::int64_t k = 0; k < ws.pre[i].size(); ++k)
            ws.post[i][k] = act_forward(spec.hidden[i].act, ws.pre[i][k]);
        h = &ws.post[i];
    }
    const Tensor& Wh = params.entries.at(spec.head_name + ".W");
    const Tensor& bh = params.entries.at(spec.head_name + ".b");
    ws.logits.noalias() = Wh.matrix() * (*h);
    ws.logits += bh.vector();

    const double m = ws.logits.maxCoeff();
    const double lse = m + std::log((ws.logits.array() - m).exp().sum());
    ws.log_probs = ws.logits.array() - lse;
}

PredictiveDistribution forward(const ModelSpec& spec, const ParameterSet& params,
                               const Eigen::Ref<const Vector>& x) {
    require_matching_shapes(spec, params);
    Workspace ws;
    forward_trace(spec, params, x, ws);
    return PredictiveDistribution{ws.log_probs};
}

void log_prob_backward(const ModelSpec& spec, const ParameterSet& params, Workspace& ws, int y,
                       double scale, bool squared, NamedTensors& out) {
    if (y < 0 || y >= spec.num_classes)
        throw DataError("class index out of range: " + std::to_string(y));

    const auto names = layer_names(spec);
    // std::exp, not Eigen's vectorized exp: the latter does not underflow to
    // an exact zero for very negative log-probs.
    for (std::int64_t k = 0; k < ws.log_probs.size(); ++k)
        ws.dz[k] = -std::exp(ws.log_probs[k]);
    ws.dz[y] += 1.0;

    auto add_layer = [&](const std::string& name, const Vector& input, const Vector& delta) {
        Tensor& gw = out.at(name + ".W");
        Tensor& gb = out.at(name + ".b");
        auto W = gw.matrix();
        if (squared) {
            W.noalias() += scale * (delta.array().square().matrix()) *
                           (input.array().square().matrix()).transpose();
            gb.data += scale * delta.array().square();
        } else {
            W.noalias() += scale * delta * input.transpose();
            gb.data += scale * delta.array();
        }
    };

    const Vector& last_h = spec.hidden.empty() ? ws.x : ws.post.back();
    add_layer(spec.head_name, last_h, ws.dz);

    const Tensor& Wh = params.entries.at(spec.head_name + ".W");
    ws.dh.noalias() = Wh.matrix().transpose() * ws.dz;

    for (std::size_t i = spec.hidden.size(); i-- > 0;) {
        ws.dpre.resize(ws.pre[i].size());
        for (std::int64_t k = 0; k < ws.pre[i].size(); ++k)
            ws.dpre[k] = ws.dh[k] * act_deriv(spec.hidden[i].act, ws.pre[i][k], ws.post[i][k]);
        const Vector& input = (i == 0) ? ws.x : ws.post[i - 1];
        add_layer(names[i], input, ws.dpre);
        const Tensor& W = params.entries.at(names[i] + ".W");
        ws.dh.noalias() = W.matrix().transpose() * ws.dpre;
    }
}

NamedTensors per_example_grad(const ModelSpec& spec, const ParameterSet& params,
                              const Eigen::Ref<const Vector>& x, int y) {
    require_matching_shapes(spec, params);
    NamedTensors grads = zero_params_like(spec);
    Workspace ws;
    forward_trace(spec, params, x, ws);
    log_prob_backward(spec, params, ws, y, 1.0, false, grads);
    return grads;
}

double evaluate(const ModelSpec& spec, const ParameterSet& params, const LabeledDataset& data,
                std::optional<std::int64_t> limit) {
    require_matching_shapes(spec, params);
    if (data.dim() != spec.input_dim) throw DataError("evaluate: dataset/input_dim mismatch");
    const std::int64_t n = limit ? std::min(*limit, data.n()) : data.n();
    if (n <= 0) throw DataError("evaluate: empty effective dataset");

    Workspace ws;
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const int y = data.labels[static_cast<std::size_t>(i)];
        if (y >= spec.num_classes) throw DataError("evaluate: label out of range");
        forward_trace(spec, params, data.features.row(i).transpose(), ws);
        int argmax = 0;
        for (int c = 1; c < spec.num_classes; ++c)
            if (ws.log_probs[c] > ws.log_probs[argmax]) argmax = c;
        if (argmax == y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

double mean_nll(const ModelSpec& spec, const ParameterSet& params, const LabeledDataset& data,
                std::optional<std::int64_t> limit) {
    require_matching_shapes(spec, params);
    const std::int64_t n = limit ? std::min(*limit, data.n()) : data.n();
    if (n <= 0) throw DataError("mean_nll: empty effective dataset");
    Workspace ws;
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        forward_trace(spec, params, data.features.row(i).transpose(), ws);
        total -= ws.log_probs[data.labels[static_cast<std::size_t>(i)]];
    }
    return total / static_cast<double>(n);
}

}  // namespace fishmerge

#include "fishmerge/serde.hpp"

#include <nlohmann/json.hpp>

namespace fishmerge {

using json = nlohmann::json;

std::string model_spec_to_json(const ModelSpec& spec) {
    json j;
    j["input_dim"] = spec.input_dim;
    json hidden = json::array();
    for (const auto& layer : spec.hidden)
        hidden.push_back({{"act", activation_name(layer.act)}, {"width", layer.width}});
    j["hidden"] = std::move(hidden);
    j["num_classes"] = spec.num_classes;
    j["head_name"] = spec.head_name;
    return j.dump(2);
}

ModelSpec model_spec_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ModelSpec spec;
        spec.input_dim = j.at("input_dim").get<int>();
        spec.num_classes = j.at("num_classes").get<int>();
        spec.head_name = j.value("head_name", std::string("head"));
        if (j.contains("hidden")) {
            for (const auto& layer : j.at("hidden")) {
                spec.hidden.push_back(HiddenLayer{
                    layer.at("width").get<int>(),
                    activation_from_name(layer.at("act").get<std::string>())});
            }
        }
        validate(spec);
        return spec;
    } catch (const json::exception& e) {
        throw DataError("model spec: malformed json: " + std::string(e.what()));
    }
}

std::string train_config_to_json(const TrainConfig& config) {
    json j;
    j["optimizer"] = optimizer_name(config.optimizer);
    j["learning_rate"] = config.learning_rate;
    j["batch_size"] = config.batch_size;
    j["epochs"] = config.epochs;
    j["seed"] = config.seed;
    j["adam_beta1"] = config.adam_beta1;
    j["adam_beta2"] = config.adam_beta2;
    j["adam_eps"] = config.adam_eps;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        TrainConfig config;
        config.optimizer = optimizer_from_name(j.value("optimizer", std::string("adam")));
        config.learning_rate = j.value("learning_rate", config.learning_rate);
        config.batch_size = j.value("batch_size", config.batch_size);
        config.epochs = j.value("epochs", config.epochs);
        config.seed = j.value("seed", config.seed);
        config.adam_beta1 = j.value("adam_beta1", config.adam_beta1);
        config.adam_beta2 = j.value("adam_beta2", config.adam_beta2);
        config.adam_eps = j.value("adam_eps", config.adam_eps);
        validate(config);
        return config;
    } catch (const json::exception& e) {
        throw DataError("train config: malformed json: " + std::string(e.what()));
    }
}

}  // namespace fishmerge

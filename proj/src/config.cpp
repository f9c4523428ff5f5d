#include "updraft/config.hpp"

namespace updraft {

using nlohmann::json;

json to_json(const ModelSpec& spec) {
    return json{{"input_mode", to_string(spec.input_mode)},
                {"depth", spec.depth},
                {"base_filters", spec.base_filters},
                {"kernel_size", spec.kernel_size},
                {"skip_style", to_string(spec.skip_style)},
                {"batch_norm", spec.batch_norm},
                {"l2_reg", spec.l2_reg},
                {"in_levels", spec.in_levels}};
}

ModelSpec model_spec_from_json(const json& j) {
    ModelSpec spec;
    if (j.contains("input_mode"))
        spec.input_mode = input_mode_from_string(j["input_mode"].get<std::string>());
    spec.depth = j.value("depth", spec.depth);
    spec.base_filters = j.value("base_filters", spec.base_filters);
    spec.kernel_size = j.value("kernel_size", spec.kernel_size);
    if (j.contains("skip_style"))
        spec.skip_style = skip_style_from_string(j["skip_style"].get<std::string>());
    spec.batch_norm = j.value("batch_norm", spec.batch_norm);
    spec.l2_reg = j.value("l2_reg", spec.l2_reg);
    spec.in_levels = j.value("in_levels", spec.in_levels);
    validate_spec(spec);
    return spec;
}

json to_json(const TrainConfig& cfg) {
    return json{{"optimizer", to_string(cfg.optimizer)},
                {"learning_rate", cfg.learning_rate},
                {"batch_size", cfg.batch_size},
                {"max_epochs", cfg.max_epochs},
                {"patience", cfg.patience},
                {"seed", cfg.seed},
                {"loss",
                 {{"epsilon", cfg.loss.epsilon},
                  {"weight_threshold", cfg.loss.weight_policy.threshold},
                  {"weight_above", cfg.loss.weight_policy.weight_above}}}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    if (j.contains("optimizer"))
        cfg.optimizer = optimizer_from_string(j["optimizer"].get<std::string>());
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("loss")) {
        const json& l = j["loss"];
        cfg.loss.epsilon = l.value("epsilon", cfg.loss.epsilon);
        cfg.loss.weight_policy.threshold =
            l.value("weight_threshold", cfg.loss.weight_policy.threshold);
        cfg.loss.weight_policy.weight_above =
            l.value("weight_above", cfg.loss.weight_policy.weight_above);
    }
    if (!(cfg.loss.epsilon > 0.0))
        throw ValidationError("loss epsilon must be > 0");
    if (cfg.loss.weight_policy.weight_above < 1.0)
        throw ValidationError("loss weight_above must be >= 1");
    if (cfg.loss.weight_policy.threshold < 0.0)
        throw ValidationError("loss weight_threshold must be >= 0");
    return cfg;
}

json to_json(const HyperSpace& space) {
    std::vector<std::string> opts;
    for (OptimizerKind o : space.optimizer)
        opts.push_back(to_string(o));
    return json{{"kernel_size", space.kernel_size},
                {"base_filters", space.base_filters},
                {"depth", space.depth},
                {"optimizer", opts},
                {"batch_norm", space.batch_norm},
                {"batch_size", space.batch_size},
                {"loss_weight", space.loss_weight},
                {"weight_threshold", space.weight_threshold},
                {"l2_reg", space.l2_reg}};
}

HyperSpace hyper_space_from_json(const json& j) {
    HyperSpace space;
    if (j.contains("kernel_size"))
        space.kernel_size = j["kernel_size"].get<std::vector<std::size_t>>();
    if (j.contains("base_filters"))
        space.base_filters = j["base_filters"].get<std::vector<std::size_t>>();
    if (j.contains("depth"))
        space.depth = j["depth"].get<std::vector<std::size_t>>();
    if (j.contains("optimizer")) {
        space.optimizer.clear();
        for (const auto& s : j["optimizer"])
            space.optimizer.push_back(optimizer_from_string(s.get<std::string>()));
    }
    if (j.contains("batch_norm"))
        space.batch_norm = j["batch_norm"].get<std::vector<bool>>();
    if (j.contains("batch_size"))
        space.batch_size = j["batch_size"].get<std::vector<std::size_t>>();
    if (j.contains("loss_weight"))
        space.loss_weight = j["loss_weight"].get<std::vector<double>>();
    if (j.contains("weight_threshold"))
        space.weight_threshold = j["weight_threshold"].get<std::vector<double>>();
    if (j.contains("l2_reg"))
        space.l2_reg = j["l2_reg"].get<std::vector<double>>();
    return space;
}

} // namespace updraft

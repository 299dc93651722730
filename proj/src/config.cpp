#include "vicc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vicc/error.hpp"

namespace vicc {

using json = nlohmann::ordered_json;

std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::single_stream: return "single_stream";
        case LossMode::cross_stream: return "cross_stream";
        case LossMode::infonce: return "infonce";
    }
    return "?";
}

std::string to_string(PredictionViews v) {
    return v == PredictionViews::all_others ? "all_others" : "other_stream_only";
}

std::string to_string(AssignmentViews v) {
    return v == AssignmentViews::both_streams ? "both_streams" : "other_stream_only";
}

std::string to_string(TargetKind t) { return t == TargetKind::sinkhorn ? "sinkhorn" : "softmax"; }

namespace {

template <typename E>
E parse_enum(const json& j, const char* key, std::initializer_list<E> options) {
    const auto s = j.get<std::string>();
    for (E e : options)
        if (to_string(e) == s) return e;
    throw ConfigError(std::string("config: invalid value \"") + s + "\" for " + key);
}

// Reads `section` into fields registered by `bind`; unknown keys throw.
class Section {
public:
    Section(const json& root, const char* name) : name_(name) {
        if (root.contains(name)) {
            if (!root[name].is_object()) throw ConfigError(std::string("config: ") + name + " must be an object");
            obj_ = root[name];
        }
    }

    template <typename T>
    void bind(const char* key, T& field) {
        known_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            field = obj_[key].template get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: bad type for " + name_ + "." + key);
        }
    }

    template <typename E>
    void bind_enum(const char* key, E& field, std::initializer_list<E> options) {
        known_.insert(key);
        if (!obj_.contains(key)) return;
        if (!obj_[key].is_string()) throw ConfigError("config: " + name_ + "." + key + " must be a string");
        field = parse_enum(obj_[key], key, options);
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items()) {
            if (!known_.count(key)) throw ConfigError("config: unknown key " + name_ + "." + key);
        }
    }

private:
    std::string name_;
    json obj_ = json::object();
    std::set<std::string> known_;
};

RunConfig from_json(const json& root) {
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    static const std::set<std::string> sections = {"data", "train", "loss", "sinkhorn", "augmentation", "eval"};
    for (const auto& [key, _] : root.items()) {
        if (!sections.count(key)) throw ConfigError("config: unknown section " + key);
    }
    RunConfig cfg;

    Section data(root, "data");
    auto& d = cfg.data;
    data.bind("factor_a", d.factor_a);
    data.bind("factor_b", d.factor_b);
    data.bind("train_per_class", d.train_per_class);
    data.bind("test_per_class", d.test_per_class);
    data.bind("latent_dim", d.latent_dim);
    data.bind("view_dims", d.view_dims);
    data.bind("nuisance_dims", d.nuisance_dims);
    data.bind("class_separation", d.class_separation);
    data.bind("latent_noise_sd", d.latent_noise_sd);
    data.bind("own_gain", d.own_gain);
    data.bind("other_gain", d.other_gain);
    data.bind("view_noise_sd", d.view_noise_sd);
    data.bind("nuisance_sd", d.nuisance_sd);
    data.bind("seed", d.seed);
    data.finish();

    Section train(root, "train");
    auto& t = cfg.train;
    train.bind("stage1_epochs", t.stage1_epochs);
    train.bind("cycle_epochs", t.cycle_epochs);
    train.bind("cycles", t.cycles);
    train.bind("batch_size", t.batch_size);
    train.bind("lr", t.lr);
    train.bind("final_lr_fraction", t.final_lr_fraction);
    train.bind("weight_decay", t.weight_decay);
    train.bind("momentum", t.momentum);
    train.bind("proto_freeze_epochs", t.proto_freeze_epochs);
    train.bind("stage2_prototype_lr_scale", t.stage2_prototype_lr_scale);
    train.bind("queue_len", t.queue_len);
    train.bind("queue_start_epoch_stage1", t.queue_start_epoch_stage1);
    train.bind("queue_start_epoch_stage2", t.queue_start_epoch_stage2);
    train.bind("seed", t.seed);
    train.bind("hidden", t.hidden);
    train.bind("embed_dim", t.embed_dim);
    train.bind("num_prototypes", t.num_prototypes);
    train.bind_enum("targets", t.targets, {TargetKind::sinkhorn, TargetKind::softmax});
    train.bind("fresh_prototypes", t.fresh_prototypes);
    train.bind("retrieval_pre_head", t.retrieval_pre_head);
    train.bind("threads", t.threads);
    train.finish();

    Section loss(root, "loss");
    loss.bind("temperature", t.loss.temperature);
    loss.bind_enum("mode", t.loss.mode,
                   {LossMode::single_stream, LossMode::cross_stream, LossMode::infonce});
    loss.bind_enum("prediction_views", t.loss.prediction_views,
                   {PredictionViews::all_others, PredictionViews::other_stream_only});
    loss.bind_enum("assignment_views", t.loss.assignment_views,
                   {AssignmentViews::both_streams, AssignmentViews::other_stream_only});
    loss.finish();

    Section sk(root, "sinkhorn");
    sk.bind("epsilon", t.sinkhorn.epsilon);
    sk.bind("iterations", t.sinkhorn.iterations);
    sk.bind("include_queue", t.sinkhorn.include_queue);
    sk.finish();

    Section aug(root, "augmentation");
    aug.bind("additive_noise_sd", t.augmentation.additive_noise_sd);
    aug.bind("mask_prob", t.augmentation.mask_prob);
    aug.bind("scale_jitter", t.augmentation.scale_jitter);
    aug.bind("temporal_prob", t.augmentation.temporal_prob);
    aug.finish();

    Section ev(root, "eval");
    ev.bind("ks", cfg.eval.ks);
    ev.bind("probe_reg", cfg.eval.probe_reg);
    ev.bind("k_eval", cfg.eval.k_eval);
    ev.bind("cluster_epochs", cfg.eval.cluster_epochs);
    ev.finish();

    cfg.data.validate();
    cfg.train.validate();
    return cfg;
}

json to_json(const RunConfig& cfg) {
    const auto& d = cfg.data;
    const auto& t = cfg.train;
    json j;
    j["data"] = {{"factor_a", d.factor_a},
                 {"factor_b", d.factor_b},
                 {"train_per_class", d.train_per_class},
                 {"test_per_class", d.test_per_class},
                 {"latent_dim", d.latent_dim},
                 {"view_dims", d.view_dims},
                 {"nuisance_dims", d.nuisance_dims},
                 {"class_separation", d.class_separation},
                 {"latent_noise_sd", d.latent_noise_sd},
                 {"own_gain", d.own_gain},
                 {"other_gain", d.other_gain},
                 {"view_noise_sd", d.view_noise_sd},
                 {"nuisance_sd", d.nuisance_sd},
                 {"seed", d.seed}};
    j["train"] = {{"stage1_epochs", t.stage1_epochs},
                  {"cycle_epochs", t.cycle_epochs},
                  {"cycles", t.cycles},
                  {"batch_size", t.batch_size},
                  {"lr", t.lr},
                  {"final_lr_fraction", t.final_lr_fraction},
                  {"weight_decay", t.weight_decay},
                  {"momentum", t.momentum},
                  {"proto_freeze_epochs", t.proto_freeze_epochs},
                  {"stage2_prototype_lr_scale", t.stage2_prototype_lr_scale},
                  {"queue_len", t.queue_len},
                  {"queue_start_epoch_stage1", t.queue_start_epoch_stage1},
                  {"queue_start_epoch_stage2", t.queue_start_epoch_stage2},
                  {"seed", t.seed},
                  {"hidden", t.hidden},
                  {"embed_dim", t.embed_dim},
                  {"num_prototypes", t.num_prototypes},
                  {"targets", to_string(t.targets)},
                  {"fresh_prototypes", t.fresh_prototypes},
                  {"retrieval_pre_head", t.retrieval_pre_head},
                  {"threads", t.threads}};
    j["loss"] = {{"temperature", t.loss.temperature},
                 {"mode", to_string(t.loss.mode)},
                 {"prediction_views", to_string(t.loss.prediction_views)},
                 {"assignment_views", to_string(t.loss.assignment_views)}};
    j["sinkhorn"] = {{"epsilon", t.sinkhorn.epsilon},
                     {"iterations", t.sinkhorn.iterations},
                     {"include_queue", t.sinkhorn.include_queue}};
    j["augmentation"] = {{"additive_noise_sd", t.augmentation.additive_noise_sd},
                         {"mask_prob", t.augmentation.mask_prob},
                         {"scale_jitter", t.augmentation.scale_jitter},
                         {"temporal_prob", t.augmentation.temporal_prob}};
    j["eval"] = {{"ks", cfg.eval.ks},
                 {"probe_reg", cfg.eval.probe_reg},
                 {"k_eval", cfg.eval.k_eval},
                 {"cluster_epochs", cfg.eval.cluster_epochs}};
    return j;
}

json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) { return from_json(parse_text(json_text)); }

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2); }

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) throw ConfigError("config: override key needs section.key: " + dotted_key);
    const std::string section = dotted_key.substr(0, dot);
    const std::string key = dotted_key.substr(dot + 1);
    json j = to_json(cfg);
    if (!j.contains(section)) throw ConfigError("config: unknown section " + section);
    if (!j[section].contains(key)) throw ConfigError("config: unknown key " + dotted_key);
    json v;
    try {
        v = json::parse(value);
    } catch (const json::parse_error&) {
        v = value;
    }
    j[section][key] = v;
    cfg = from_json(j);
}

}  // namespace vicc

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vicc/checkpoint.hpp"
#include "vicc/config.hpp"
#include "vicc/data.hpp"
#include "vicc/error.hpp"
#include "vicc/eval.hpp"
#include "vicc/gradcheck.hpp"
#include "vicc/trainer.hpp"

using json = nlohmann::ordered_json;
using namespace vicc;

namespace {

constexpr const char* kConfigEnv = "VICC_CONFIG";

// Options shared by every subcommand that builds a RunConfig.
struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // section.key=value
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path,
                    std::string("JSON run config (default: $") + kConfigEnv + ")");
    cmd->add_option("--set", args.overrides, "Override a config key, e.g. train.lr=0.1");
}

RunConfig build_config(const ConfigArgs& args) {
    RunConfig cfg;
    std::string path = args.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv(kConfigEnv)) path = env;
    }
    if (!path.empty()) cfg = load_run_config(path);
    for (const auto& o : args.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + o);
        apply_override(cfg, o.substr(0, eq), o.substr(eq + 1));
    }
    return cfg;
}

std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

// The dataset file when given; otherwise the benchmark described by the
// config, generated in memory. Only the generated form can redraw clips.
DatasetSplit obtain_data(const std::string& data_path, const RunConfig& cfg) {
    if (!data_path.empty()) return load_dataset(data_path);
    return generate(cfg.data);
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
    ConfigArgs cfg;
    std::string preset = "default";
    std::uint64_t seed = 7;
    std::uint32_t classes = 0;
    std::string factor_split;
    std::string output = "bench.vccd";
};

int cmd_gen_data(const GenArgs& a, bool seed_given) {
    RunConfig cfg = build_config(a.cfg);
    SyntheticSpec& spec = cfg.data;
    if (a.preset == "smoke") {
        spec.train_per_class = 32;
        spec.test_per_class = 8;
    } else if (a.preset != "default") {
        throw ConfigError("unknown preset " + a.preset + " (default, smoke)");
    }
    if (seed_given) spec.seed = a.seed;

    if (!a.factor_split.empty()) {
        const auto x = a.factor_split.find('x');
        std::uint32_t fa = 0, fb = 0;
        try {
            if (x == std::string::npos) throw std::invalid_argument("no x");
            std::size_t used = 0;
            fa = static_cast<std::uint32_t>(std::stoul(a.factor_split.substr(0, x), &used));
            if (used != x) throw std::invalid_argument("trailing");
            const std::string rest = a.factor_split.substr(x + 1);
            fb = static_cast<std::uint32_t>(std::stoul(rest, &used));
            if (used != rest.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError("--factor-split expects AxB, got " + a.factor_split);
        }
        if (fa < 2 || fb < 2) throw ConfigError("--factor-split factors must be >= 2");
        spec.factor_a = fa;
        spec.factor_b = fb;
    }
    if (a.classes != 0) {
        if (a.factor_split.empty()) {
            if (a.classes % spec.factor_b != 0 || a.classes / spec.factor_b < 2) {
                throw ConfigError("--classes " + std::to_string(a.classes) +
                                  " is not a multiple of factor_b " + std::to_string(spec.factor_b));
            }
            spec.factor_a = a.classes / spec.factor_b;
        } else if (spec.factor_a * spec.factor_b != a.classes) {
            throw ConfigError("--factor-split " + a.factor_split + " does not give " +
                              std::to_string(a.classes) + " classes");
        }
    }
    spec.validate();

    const DatasetSplit split = generate(spec);
    save_dataset(split, a.output);
    const auto sep = factor_separability(split, spec.factor_b);

    json out;
    out["output"] = a.output;
    out["classes"] = spec.num_classes();
    out["factor_split"] = std::to_string(spec.factor_a) + "x" + std::to_string(spec.factor_b);
    out["train_samples"] = split.train.size();
    out["test_samples"] = split.test.size();
    out["view_dims"] = {split.train.dim(0), split.train.dim(1)};
    out["seed"] = spec.seed;
    out["checksum"] = hex(file_checksum(a.output));
    for (int s = 0; s < 2; ++s) {
        const std::string key = "stream" + std::to_string(s + 1);
        out["separability"][key]["factor_a"] = sep.accuracy[s][0];
        out["separability"][key]["factor_b"] = sep.accuracy[s][1];
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    ConfigArgs cfg;
    std::string data;
    std::string stage = "full";
    std::string mode;
    std::vector<std::string> ablations;
    std::string init;
    std::string output = "vicc.ckpt";
    std::string log;
    std::uint64_t seed = 7;
    bool fresh_prototypes = false;
    int threads = 0;
};

void apply_ablation(TrainConfig& t, const std::string& spec) {
    if (spec == "assignment-views=other-stream") {
        t.loss.assignment_views = AssignmentViews::other_stream_only;
    } else if (spec == "prediction-views=other-stream") {
        t.loss.prediction_views = PredictionViews::other_stream_only;
    } else if (spec == "targets=softmax") {
        t.targets = TargetKind::softmax;
    } else {
        throw ConfigError("unknown ablation " + spec +
                          " (assignment-views=other-stream, prediction-views=other-stream, "
                          "targets=softmax)");
    }
}

int cmd_train(const TrainArgs& a, bool seed_given) {
    RunConfig cfg = build_config(a.cfg);
    TrainConfig& t = cfg.train;
    if (seed_given) t.seed = a.seed;
    if (a.fresh_prototypes) t.fresh_prototypes = true;
    if (a.threads > 0) t.threads = a.threads;
    for (const auto& ab : a.ablations) apply_ablation(t, ab);
    if (!a.mode.empty()) {
        if (a.mode == "infonce") t.loss.mode = LossMode::infonce;
        else if (a.mode == "prototype") t.loss.mode = LossMode::single_stream;
        else throw ConfigError("--mode must be prototype or infonce, got " + a.mode);
    }
    if (t.loss.mode == LossMode::infonce && a.stage != "stage1") {
        throw ConfigError("--mode infonce only applies to --stage stage1");
    }
    if (a.stage == "cross" && a.init.empty()) {
        throw ConfigError("--stage cross needs --init <stage-1 checkpoint>");
    }
    t.validate();

    const DatasetSplit data = obtain_data(a.data, cfg);
    MetricLog log;
    TrainState state;
    if (a.stage == "full") {
        auto res = run_full_pipeline(t, data);
        state = std::move(res.state);
        log = std::move(res.log);
    } else if (a.stage == "stage1") {
        state = init_state(t, data.train.dim(0), data.train.dim(1));
        run_single_stage(state, t, data, &log);
    } else if (a.stage == "cross") {
        state = from_archive(TensorArchive::load(a.init));
        run_cross_stage(state, t, data, &log);
    } else {
        throw ConfigError("--stage must be stage1, cross or full, got " + a.stage);
    }

    to_archive(state).save(a.output);
    std::ostringstream lines;
    for (const auto& rec : log) lines << rec.to_json() << "\n";
    write_text(a.log.empty() ? a.output + ".jsonl" : a.log, lines.str());

    const auto m = evaluate_retrieval(state, data, t.retrieval_pre_head);
    json out;
    out["checkpoint"] = a.output;
    out["stage"] = a.stage;
    out["r1"] = {{"stream1", m.r1_stream1}, {"stream2", m.r1_stream2}, {"combined", m.r1_combined}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    ConfigArgs cfg;
    std::string checkpoint;
    std::string data;
    std::string report = "all";
    std::string streams = "both";
    std::uint32_t k_eval = 0;
    std::string output;
};

// Unit-norm features of the requested streams. "both" stacks the two
// embeddings scaled by 1/sqrt(2), whose cosine similarity is the mean of the
// per-stream similarities.
Matrix stream_features(const TrainState& state, const Matrix& x1, const Matrix& x2,
                       const std::string& streams, bool pre_head) {
    if (streams == "rgb") return embed(state.streams[0].enc, x1, pre_head);
    if (streams == "flow") return embed(state.streams[1].enc, x2, pre_head);
    const Matrix z1 = embed(state.streams[0].enc, x1, pre_head);
    const Matrix z2 = embed(state.streams[1].enc, x2, pre_head);
    Matrix z(z1.rows() + z2.rows(), z1.cols());
    const double w = 1.0 / std::sqrt(2.0);
    for (std::size_t c = 0; c < z.cols(); ++c) {
        for (std::size_t r = 0; r < z1.rows(); ++r) z(r, c) = w * z1(r, c);
        for (std::size_t r = 0; r < z2.rows(); ++r) z(z1.rows() + r, c) = w * z2(r, c);
    }
    return z;
}

json retrieval_json(const TrainState& st, const DatasetSplit& d, const std::string& streams,
                    const RunConfig& cfg) {
    const bool pre = cfg.train.retrieval_pre_head;
    std::vector<int> ks = cfg.eval.ks;
    RetrievalReport rep;
    if (streams == "both") {
        Matrix sim[2];
        for (int s = 0; s < 2; ++s) {
            sim[s] = retrieval_similarity(embed(st.streams[s].enc, d.train.views[s], pre),
                                          embed(st.streams[s].enc, d.test.views[s], pre));
        }
        rep = retrieval_from_similarity(combine_streams(sim[0], sim[1]), d.train.labels,
                                        d.test.labels, ks);
    } else {
        rep = knn_retrieval(stream_features(st, d.train.views[0], d.train.views[1], streams, pre),
                            d.train.labels,
                            stream_features(st, d.test.views[0], d.test.views[1], streams, pre),
                            d.test.labels, ks);
    }
    json j;
    for (const auto& [k, v] : rep.recall_at) j["R@" + std::to_string(k)] = v;
    return j;
}

json probe_json(const TrainState& st, const DatasetSplit& d, const std::string& streams,
                const RunConfig& cfg) {
    const bool pre = cfg.train.retrieval_pre_head;
    ProbeOptions opts;
    opts.reg = cfg.eval.probe_reg;
    const std::uint32_t classes = d.train.num_classes;
    auto proba = [&](int s) {
        const auto model = fit_logistic(embed(st.streams[s].enc, d.train.views[s], pre),
                                        d.train.labels, classes, opts);
        return predict_proba(model, embed(st.streams[s].enc, d.test.views[s], pre));
    };
    Matrix scores;
    if (streams == "rgb") scores = proba(0);
    else if (streams == "flow") scores = proba(1);
    else scores = combine_streams(proba(0), proba(1));
    return {{"top1", top1_accuracy(scores, d.test.labels)}};
}

json cluster_json(const TrainState& st, const DatasetSplit& d, const std::string& streams,
                  const RunConfig& cfg, std::uint32_t k_eval) {
    const Matrix train = stream_features(st, d.train.views[0], d.train.views[1], streams, false);
    const Matrix test = stream_features(st, d.test.views[0], d.test.views[1], streams, false);
    const auto ids = fit_eval_clusters(EncoderParams::identity(train.rows()), train, test, k_eval,
                                       cfg.train, cfg.eval.cluster_epochs);
    const auto r = cluster_eval(ids, d.test.labels, k_eval);
    return {{"k_eval", k_eval},  {"acc", r.acc},
            {"nmi", r.nmi},      {"ari", r.ari},
            {"mean_entropy", r.mean_entropy}, {"max_purity", r.max_purity}};
}

int cmd_eval(const EvalArgs& a) {
    RunConfig cfg = build_config(a.cfg);
    if (a.streams != "rgb" && a.streams != "flow" && a.streams != "both") {
        throw ConfigError("--streams must be rgb, flow or both, got " + a.streams);
    }
    const bool all = a.report == "all";
    if (!all && a.report != "retrieval" && a.report != "probe" && a.report != "cluster") {
        throw ConfigError("--report must be retrieval, probe, cluster or all, got " + a.report);
    }
    const TrainState st = from_archive(TensorArchive::load(a.checkpoint));
    const DatasetSplit d = obtain_data(a.data, cfg);
    std::uint32_t k_eval = a.k_eval ? a.k_eval : cfg.eval.k_eval;
    if (k_eval == 0) k_eval = d.train.num_classes;

    json out;
    out["streams"] = a.streams;
    if (all || a.report == "retrieval") out["retrieval"] = retrieval_json(st, d, a.streams, cfg);
    if (all || a.report == "probe") out["probe"] = probe_json(st, d, a.streams, cfg);
    if (all || a.report == "cluster") out["cluster"] = cluster_json(st, d, a.streams, cfg, k_eval);
    write_text(a.output, out.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------- grad-check

struct GradArgs {
    std::string mode = "all";
    int seeds = 10;
    double tolerance = 1e-4;
    bool inject_sign_flip = false;
    std::string report;
};

int cmd_grad_check(const GradArgs& a) {
    GradCheckOptions opts;
    opts.seeds = a.seeds;
    opts.tolerance = a.tolerance;
    opts.inject_sign_flip = a.inject_sign_flip;
    if (a.mode == "infonce") opts.modes = {LossMode::infonce};
    else if (a.mode == "single_stream") opts.modes = {LossMode::single_stream};
    else if (a.mode == "cross_stream") opts.modes = {LossMode::cross_stream};
    else if (a.mode != "all")
        throw ConfigError("--mode must be all, infonce, single_stream or cross_stream");

    const auto rep = run_grad_check(opts);
    json out;
    out["checks"] = rep.entries.size();
    out["max_rel_error"] = rep.max_rel_error();
    out["tolerance"] = rep.tolerance;
    if (rep.loss_terms_seen > 0) out["cross_stream_terms"] = rep.loss_terms_seen;
    out["failures"] = json::array();
    for (const auto& f : rep.failures())
        out["failures"].push_back({{"name", f.name}, {"rel_error", f.rel_error}});
    out["passed"] = rep.passed();
    write_text(a.report, out.dump(2) + "\n");
    return rep.passed() ? 0 : 1;
}

// ---------------------------------------------------------------- export-embeddings

struct ExportArgs {
    ConfigArgs cfg;
    std::string checkpoint;
    std::string data;
    std::string output = "embeddings.vccd";
    bool pre_head = false;
};

int cmd_export(const ExportArgs& a) {
    RunConfig cfg = build_config(a.cfg);
    const TrainState st = from_archive(TensorArchive::load(a.checkpoint));
    const DatasetSplit d = obtain_data(a.data, cfg);
    DatasetSplit out;
    for (auto [src, dst] : {std::pair{&d.train, &out.train}, std::pair{&d.test, &out.test}}) {
        for (int s = 0; s < 2; ++s) dst->views[s] = embed(st.streams[s].enc, src->views[s], a.pre_head);
        dst->labels = src->labels;
        dst->num_classes = src->num_classes;
    }
    save_dataset(out, a.output);
    json j;
    j["output"] = a.output;
    j["embed_dims"] = {out.train.dim(0), out.train.dim(1)};
    j["train_samples"] = out.train.size();
    j["test_samples"] = out.test.size();
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vicc: two-stream prototypical contrasting on synthetic benchmarks"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a benchmark dataset file");
    add_config_options(gen_cmd, gen.cfg);
    gen_cmd->add_option("--preset", gen.preset, "default or smoke");
    auto* gen_seed = gen_cmd->add_option("--seed", gen.seed, "Generation seed");
    gen_cmd->add_option("--classes", gen.classes, "Number of classes M");
    gen_cmd->add_option("--factor-split", gen.factor_split, "Class factorization AxB");
    gen_cmd->add_option("-o,--output", gen.output, "Output .vccd path");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train encoders and prototypes");
    add_config_options(train_cmd, tr.cfg);
    train_cmd->add_option("--data", tr.data, "Dataset file (default: generate from config)");
    train_cmd->add_option("--stage", tr.stage, "stage1, cross or full");
    train_cmd->add_option("--mode", tr.mode, "Stage-1 objective: prototype or infonce");
    train_cmd->add_option("--ablation", tr.ablations, "Loss or target ablation");
    train_cmd->add_option("--init", tr.init, "Stage-1 checkpoint for --stage cross");
    train_cmd->add_option("-o,--output", tr.output, "Checkpoint path");
    train_cmd->add_option("--log", tr.log, "Metric log path (default: <checkpoint>.jsonl)");
    auto* train_seed = train_cmd->add_option("--seed", tr.seed, "Training seed");
    train_cmd->add_flag("--fresh-prototypes", tr.fresh_prototypes, "Re-initialize prototypes for Stage 2");
    train_cmd->add_option("--threads", tr.threads, "Worker threads");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_config_options(eval_cmd, ev.cfg);
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
    eval_cmd->add_option("--data", ev.data, "Dataset file (default: generate from config)");
    eval_cmd->add_option("--report", ev.report, "retrieval, probe, cluster or all");
    eval_cmd->add_option("--streams", ev.streams, "rgb, flow or both");
    eval_cmd->add_option("--k-eval", ev.k_eval, "Clusters for the cluster report");
    eval_cmd->add_option("-o,--output", ev.output, "JSON report path (default: stdout)");

    GradArgs gc;
    auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient verification");
    grad_cmd->add_option("--mode", gc.mode, "all, infonce, single_stream or cross_stream");
    grad_cmd->add_option("--seeds", gc.seeds, "Random instances per case");
    grad_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error");
    grad_cmd->add_flag("--inject-sign-flip", gc.inject_sign_flip, "Debug: corrupt one gradient");
    grad_cmd->add_option("--report", gc.report, "JSON report path (default: stdout)");

    ExportArgs ex;
    auto* export_cmd = app.add_subcommand("export-embeddings", "Write features and labels as VCCD");
    add_config_options(export_cmd, ex.cfg);
    export_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint path")->required();
    export_cmd->add_option("--data", ex.data, "Dataset file (default: generate from config)");
    export_cmd->add_option("-o,--output", ex.output, "Output .vccd path");
    export_cmd->add_flag("--pre-head", ex.pre_head, "Export the representation before the head");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen, gen_seed->count() > 0);
        if (*train_cmd) return cmd_train(tr, train_seed->count() > 0);
        if (*eval_cmd) return cmd_eval(ev);
        if (*grad_cmd) return cmd_grad_check(gc);
        if (*export_cmd) return cmd_export(ex);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

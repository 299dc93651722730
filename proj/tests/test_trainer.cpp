#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vicc/checkpoint.hpp"
#include "vicc/error.hpp"
#include "vicc/trainer.hpp"

using namespace vicc;

namespace {
DatasetSplit small_data() {
    SyntheticSpec spec;
    spec.train_per_class = 16;
    spec.test_per_class = 4;
    return generate(spec);
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.stage1_epochs = 3;
    cfg.cycle_epochs = 2;
    cfg.cycles = 1;
    cfg.batch_size = 32;
    cfg.hidden = {16};
    cfg.embed_dim = 8;
    cfg.num_prototypes = 10;
    cfg.queue_len = 32;
    cfg.queue_start_epoch_stage1 = 1;
    cfg.queue_start_epoch_stage2 = 1;
    cfg.proto_freeze_epochs = 1;
    return cfg;
}

std::string archive_bytes(const TrainState& st) {
    std::ostringstream os;
    to_archive(st).write(os);
    return os.str();
}
}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("cosine schedule endpoints") {
    CHECK(cosine_lr(0.3, 1e-3, 0, 100) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(cosine_lr(0.3, 1e-3, 99, 100) == doctest::Approx(0.3e-3).epsilon(1e-12));
    CHECK(cosine_lr(0.3, 1e-3, 50, 101) == doctest::Approx(0.3 * (1e-3 + (1 - 1e-3) * 0.5)).epsilon(1e-12));
}

TEST_CASE("sgd step recurrences") {
    Matrix p{{1.0, -2.0}}, v(1, 2), g{{0.5, 0.25}};
    sgd_step(p, g, v, SgdParams{0.1, 0.0, 0.0});
    CHECK(p(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(p(0, 1) == doctest::Approx(-2.025).epsilon(1e-15));

    // Zero gradient: parameters move only by the decaying velocity.
    Matrix q{{1.0}}, vq{{0.2}};
    sgd_step(q, Matrix{{0.0}}, vq, SgdParams{0.1, 0.9, 0.0});
    CHECK(vq(0, 0) == doctest::Approx(0.18).epsilon(1e-15));
    CHECK(q(0, 0) == doctest::Approx(1.0 - 0.018).epsilon(1e-15));

    // Two steps against the hand-unrolled recurrence.
    const double lr = 0.05, mu = 0.9, wd = 0.01;
    double x = 2.0, vel = 0.0;
    const double g1 = 0.3, g2 = -0.7;
    Matrix xm{{x}}, vm(1, 1);
    sgd_step(xm, Matrix{{g1}}, vm, SgdParams{lr, mu, wd});
    sgd_step(xm, Matrix{{g2}}, vm, SgdParams{lr, mu, wd});
    vel = mu * vel + g1 + wd * x;
    x -= lr * vel;
    vel = mu * vel + g2 + wd * x;
    x -= lr * vel;
    CHECK(std::abs(xm(0, 0) - x) <= 1e-12);

    std::vector<double> pv{1.0}, gv{0.5}, vv{0.0};
    sgd_step(pv, gv, vv, SgdParams{0.1, 0.0, 0.0});
    CHECK(pv[0] == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("feature queue is FIFO with bounded capacity") {
    FeatureQueue q(1, 3);
    CHECK(q.size() == 0);
    q.push(Matrix{{1, 2}});
    q.push(Matrix{{3, 4}});
    CHECK(q.size() == 3);
    CHECK(q.contents() == Matrix{{2, 3, 4}});
    q.push(Matrix{{5}});
    CHECK(q.contents() == Matrix{{3, 4, 5}});
    FeatureQueue none(1, 0);
    none.push(Matrix{{1}});
    CHECK(none.size() == 0);
    CHECK_THROWS_AS(q.push(Matrix(2, 1)), InvalidArgument);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.final_lr_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.stage1_epochs = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("prototype freeze keeps the bank") {
    const auto data = small_data();
    auto cfg = small_config();
    cfg.proto_freeze_epochs = cfg.stage1_epochs;
    auto st = init_state(cfg, data.train.dim(0), data.train.dim(1));
    const Matrix before = st.streams[0].bank.c;
    const auto enc_before = checksum(st.streams[0].enc);
    train_single_stream(st, 0, data, cfg);
    CHECK(st.streams[0].bank.c == before);
    CHECK(checksum(st.streams[0].enc) != enc_before);
}

TEST_CASE("a cross-stream phase leaves the other stream untouched") {
    const auto data = small_data();
    auto cfg = small_config();
    auto st = init_state(cfg, data.train.dim(0), data.train.dim(1));
    train_single_stream(st, 0, data, cfg);
    train_single_stream(st, 1, data, cfg);
    const auto enc1 = checksum(st.streams[1].enc);
    const auto bank1 = checksum(st.streams[1].bank.c);
    const auto enc0 = checksum(st.streams[0].enc);
    train_cross_stream_phase(st, 0, data, cfg, "cycle1_s1");
    CHECK(checksum(st.streams[1].enc) == enc1);
    CHECK(checksum(st.streams[1].bank.c) == bank1);
    CHECK(checksum(st.streams[0].enc) != enc0);
}

TEST_CASE("pipeline phases and log structure") {
    CHECK(pipeline_phases(2) ==
          std::vector<std::string>{"stage1_s1", "stage1_s2", "cycle1_s1", "cycle1_s2", "cycle2_s1", "cycle2_s2"});
    const auto data = small_data();
    auto cfg = small_config();
    cfg.cycles = 2;
    std::vector<std::string> seen;
    const auto res = run_full_pipeline(cfg, data, [&](const TrainState& s) { seen.push_back(s.phase); });
    CHECK(seen == pipeline_phases(2));
    CHECK(res.state.phases_done == 6);
    std::vector<std::string> eval_phases;
    for (const auto& r : res.log) {
        CHECK(std::isfinite(r.loss));
        if (r.eval) {
            CHECK(r.epoch == -1);
            eval_phases.push_back(r.phase);
        }
    }
    CHECK(eval_phases == pipeline_phases(2));
}

TEST_CASE("training is deterministic and thread count does not change results") {
    const auto data = small_data();
    auto cfg = small_config();
    const auto a = run_full_pipeline(cfg, data);
    const auto b = run_full_pipeline(cfg, data);
    CHECK(archive_bytes(a.state) == archive_bytes(b.state));
    cfg.threads = 2;
    const auto c = run_full_pipeline(cfg, data);
    CHECK(archive_bytes(a.state) == archive_bytes(c.state));
    REQUIRE(a.log.size() == c.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].to_json() == c.log[i].to_json());
}

TEST_CASE("checkpoint round trip restores the state") {
    const auto data = small_data();
    const auto cfg = small_config();
    auto st = init_state(cfg, data.train.dim(0), data.train.dim(1));
    train_single_stream(st, 0, data, cfg);
    const auto back = from_archive(to_archive(st));
    CHECK(archive_bytes(back) == archive_bytes(st));
    CHECK(back.phases_done == st.phases_done);
}

TEST_CASE("cross stage needs a finished stage 1") {
    const auto data = small_data();
    const auto cfg = small_config();
    auto st = init_state(cfg, data.train.dim(0), data.train.dim(1));
    CHECK_THROWS_AS(run_cross_stage(st, cfg, data), InvalidArgument);
}

TEST_CASE("loss decreases when training on one fixed batch") {
    SyntheticSpec spec;
    spec.train_per_class = 8;
    spec.test_per_class = 2;
    const auto data = generate(spec);
    auto cfg = small_config();
    cfg.batch_size = 64;
    cfg.stage1_epochs = 50;
    cfg.queue_len = 0;
    cfg.proto_freeze_epochs = 0;
    auto st = init_state(cfg, data.train.dim(0), data.train.dim(1));
    MetricLog log;
    train_single_stream(st, 0, data, cfg, &log);
    REQUIRE(log.size() == 50);
    double first = 0.0, last = 0.0;
    for (int e = 0; e < 5; ++e) first += log[e].loss;
    for (int e = 45; e < 50; ++e) last += log[e].loss;
    CHECK(last < first);
}

TEST_CASE("prototype usage entropy is bounded by log K") {
    const auto data = small_data();
    auto cfg = small_config();
    cfg.stage1_epochs = 10;
    auto st = init_state(cfg, data.train.dim(0), data.train.dim(1));
    train_single_stream(st, 0, data, cfg);
    const double sk = prototype_usage_entropy(st, 0, data, cfg);
    CHECK(sk > 0.0);
    CHECK(sk <= std::log(static_cast<double>(cfg.num_prototypes)) + 1e-12);
}

}

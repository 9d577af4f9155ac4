#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "milnce/checkpoint.hpp"
#include "milnce/corpus.hpp"
#include "milnce/errors.hpp"
#include "milnce/trainer.hpp"

using namespace milnce;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() / "milnce_tests";
    fs::create_directories(dir);
    return dir / (name + "-" + std::to_string(counter++) + ".bin");
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

Corpus tiny_corpus(std::uint64_t seed, double pAligned = 1.0, double pIrrelevant = 0.0) {
    GenConfig cfg;
    cfg.numStreams = 20;
    cfg.segmentsPerStream = 8;
    cfg.numTopics = 6;
    cfg.topicDim = 4;
    cfg.clipDim = 6;
    cfg.vocabSize = 35;
    cfg.tokensPerNarration = 4;
    cfg.noiseSigma = 0.1;
    cfg.pAligned = pAligned;
    cfg.maxOffset = 1;
    cfg.pIrrelevant = pIrrelevant;
    cfg.seed = seed;
    return generate_corpus(cfg);
}

TrainConfig tiny_train_config(std::uint64_t seed, std::size_t steps = 20) {
    TrainConfig tc;
    tc.lossKind = LossKind::mil_nce;
    tc.bagSize = 3;
    tc.batchSize = 4;
    tc.totalSteps = steps;
    tc.seed = seed;
    tc.encoder = EncoderConfig{6, 5, 8, 4, 35, 8, false};
    tc.schedule = Schedule{1e-3, 2, {steps > 4 ? steps / 2 : 3, steps > 4 ? steps - 2 : 4}, 0.1};
    tc.logEvery = 5;
    tc.heldoutFraction = 0.1;
    return tc;
}

}  // namespace

TEST_CASE("learning rate schedule: warmup, plateau, two decays") {
    Schedule s{1e-3, 100, {1200, 1600}, 0.1};
    REQUIRE(lr_at(s, 0) == 0.0);
    REQUIRE(lr_at(s, 50) == Catch::Approx(5e-4));
    REQUIRE(lr_at(s, 100) == Catch::Approx(1e-3));
    REQUIRE(lr_at(s, 500) == Catch::Approx(1e-3));
    REQUIRE(lr_at(s, 1200) == Catch::Approx(1e-4));
    REQUIRE(lr_at(s, 1599) == Catch::Approx(1e-4));
    REQUIRE(lr_at(s, 1601) == Catch::Approx(1e-5));

    // Non-increasing after warmup.
    double prev = lr_at(s, 100);
    for (std::size_t t = 101; t <= 2000; ++t) {
        double lr = lr_at(s, t);
        REQUIRE(lr <= prev + 1e-18);
        prev = lr;
    }
}

TEST_CASE("adam: zero gradients leave parameters unchanged but advance t") {
    std::vector<double> param{1.0, -2.0, 3.0};
    std::vector<double> grad{0.0, 0.0, 0.0};
    AdamState st;
    std::vector<ParamView> pv{{"p", param.data(), param.size()}};
    std::vector<GradView> gv{{grad.data(), grad.size()}};
    adam_step(pv, gv, st, AdamConfig{}, 1e-3);
    REQUIRE(param == std::vector<double>{1.0, -2.0, 3.0});
    REQUIRE(st.t == 1);
}

TEST_CASE("adam: bias-corrected first step has magnitude close to lr") {
    for (double g : {0.5, -3.0, 1e-4}) {
        std::vector<double> param{0.0};
        std::vector<double> grad{g};
        AdamState st;
        std::vector<ParamView> pv{{"p", param.data(), 1}};
        std::vector<GradView> gv{{grad.data(), 1}};
        adam_step(pv, gv, st, AdamConfig{}, 1e-3);
        REQUIRE(std::abs(param[0]) == Catch::Approx(1e-3).epsilon(1e-3));
        REQUIRE(param[0] * g < 0.0);  // moves against the gradient
    }
}

TEST_CASE("adam: two identical steps differ from one step at doubled lr") {
    auto run = [](int steps, double lr) {
        std::vector<double> param{1.0};
        AdamState st;
        for (int i = 0; i < steps; ++i) {
            // Gradient of f(p) = p^2 / 2 at the current parameter.
            std::vector<double> grad{param[0]};
            std::vector<ParamView> pv{{"p", param.data(), 1}};
            std::vector<GradView> gv{{grad.data(), 1}};
            adam_step(pv, gv, st, AdamConfig{}, lr);
        }
        return param[0];
    };
    double twice = run(2, 1e-2);
    double once = run(1, 2e-2);
    REQUIRE(std::abs(twice - once) > 1e-6);
}

TEST_CASE("adam aborts on non-finite gradients") {
    std::vector<double> param{1.0};
    std::vector<double> grad{std::numeric_limits<double>::quiet_NaN()};
    AdamState st;
    std::vector<ParamView> pv{{"p", param.data(), 1}};
    std::vector<GradView> gv{{grad.data(), 1}};
    REQUIRE_THROWS_AS(adam_step(pv, gv, st, AdamConfig{}, 1e-3), NumericError);
}

TEST_CASE("train config validation") {
    TrainConfig tc = tiny_train_config(1);
    tc.batchSize = 1;
    REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);

    tc = tiny_train_config(1);
    tc.bagSize = 4;
    REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);

    tc = tiny_train_config(1);
    tc.lossKind = LossKind::nce;
    tc.bagSize = 3;  // single-instance losses demand K = 1
    REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);

    tc = tiny_train_config(1);
    tc.lossKind = LossKind::max_margin;
    tc.bagSize = 1;
    tc.negMode = NegativeMode::text_given_video;
    REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);

    tc = tiny_train_config(1, 20);
    tc.schedule.decaySteps = {25, 30};  // beyond totalSteps
    REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);
}

TEST_CASE("zero training steps returns the initialization") {
    Corpus corpus = tiny_corpus(5);
    TrainConfig tc = tiny_train_config(9, 0);
    Checkpoint ck = train(tc, corpus);
    Checkpoint init = init_checkpoint(tc);
    REQUIRE(ck.step == 0);
    REQUIRE(encoders_equal(ck.encoders, init.encoders));
}

TEST_CASE("identical config and seed give byte-identical checkpoints and metrics") {
    Corpus corpus = tiny_corpus(5);
    TrainConfig tc = tiny_train_config(9, 12);
    auto runOnce = [&](const fs::path& p) {
        std::ostringstream metrics;
        Checkpoint ck = train(tc, corpus, "echo", [&](std::size_t s, double lr, double loss) {
            metrics << s << ' ' << lr << ' ' << loss << '\n';
        });
        save_checkpoint(p, ck);
        return metrics.str();
    };
    fs::path p1 = temp_file("det-a");
    fs::path p2 = temp_file("det-b");
    std::string m1 = runOnce(p1);
    std::string m2 = runOnce(p2);
    REQUIRE(m1 == m2);
    REQUIRE(slurp(p1) == slurp(p2));
    REQUIRE(!slurp(p1).empty());
}

TEST_CASE("checkpoint save/load round-trips and resuming is bit-identical") {
    Corpus corpus = tiny_corpus(6);
    TrainConfig tc = tiny_train_config(11, 14);

    // Straight run.
    Checkpoint straight = train(tc, corpus, "cfg");

    // Interrupted run: stop at 7, save, load, continue.
    TrainConfig half = tc;
    half.totalSteps = 7;
    // Schedule fields must stay identical for the comparison to make sense.
    half.schedule = tc.schedule;
    Checkpoint ck = init_checkpoint(tc, "cfg");
    StreamSplit split = split_streams(corpus.streams.size(), tc.heldoutFraction);
    for (std::size_t step = 0; step < 7; ++step) train_step(ck, tc, corpus, split.trainEnd, step);
    fs::path mid = temp_file("resume");
    save_checkpoint(mid, ck);
    Checkpoint resumed = load_checkpoint(mid);
    REQUIRE(resumed.step == 7);
    REQUIRE(encoders_equal(resumed.encoders, ck.encoders));
    REQUIRE(resumed.configEcho == "cfg");
    train_continue(resumed, tc, corpus);

    REQUIRE(encoders_equal(resumed.encoders, straight.encoders));
    REQUIRE(resumed.adam.m == straight.adam.m);
    REQUIRE(resumed.adam.v == straight.adam.v);
    REQUIRE(resumed.adam.t == straight.adam.t);

    fs::path a = temp_file("straight");
    fs::path b = temp_file("resumed");
    save_checkpoint(a, straight);
    save_checkpoint(b, resumed);
    REQUIRE(slurp(a) == slurp(b));
}

TEST_CASE("frozen embedding table never changes during training") {
    Corpus corpus = tiny_corpus(7);
    TrainConfig tc = tiny_train_config(13, 10);
    Checkpoint init = init_checkpoint(tc);
    Checkpoint ck = train(tc, corpus);
    REQUIRE(ck.encoders.text.embedding == init.encoders.text.embedding);
    // And the trunk did move.
    REQUIRE(ck.encoders.text.w1 != init.encoders.text.w1);
}

TEST_CASE("loss improves on a clean corpus, median over seeds") {
    Corpus corpus = tiny_corpus(8, 1.0, 0.0);
    // Median first-vs-last comparison over 5 seeds, direction only.
    std::vector<double> improvements;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TrainConfig tc = tiny_train_config(seed, 300);
        tc.schedule = Schedule{3e-3, 10, {200, 260}, 0.1};
        double first = 0.0, last = 0.0;
        bool haveFirst = false;
        train(tc, corpus, "", [&](std::size_t step, double, double loss) {
            if (!haveFirst && step == 1) {
                first = loss;
                haveFirst = true;
            }
            last = loss;
        });
        improvements.push_back(first - last);
    }
    std::sort(improvements.begin(), improvements.end());
    REQUIRE(improvements[2] > 0.0);  // median strictly improves
}

TEST_CASE("checkpoint file format rejects foreign bytes and bad versions") {
    fs::path p = temp_file("garbage");
    {
        std::ofstream os(p, std::ios::binary);
        os << "not a checkpoint at all";
    }
    REQUIRE_THROWS_AS(load_checkpoint(p), ArtifactError);

    Corpus corpus = tiny_corpus(5);
    TrainConfig tc = tiny_train_config(2, 0);
    Checkpoint ck = train(tc, corpus);
    fs::path good = temp_file("ok");
    save_checkpoint(good, ck);
    // Flip the version field (bytes 4..7).
    std::string bytes = slurp(good);
    bytes[4] = 9;
    fs::path bad = temp_file("badver");
    {
        std::ofstream os(bad, std::ios::binary);
        os << bytes;
    }
    REQUIRE_THROWS_AS(load_checkpoint(bad), ArtifactError);
}

TEST_CASE("attention-head training state round-trips through the checkpoint") {
    Corpus corpus = tiny_corpus(5);
    TrainConfig tc = tiny_train_config(3, 6);
    tc.lossKind = LossKind::attn_nce;
    Checkpoint ck = train(tc, corpus, "echo");
    REQUIRE(ck.encoders.video.attn.has_value());
    fs::path p = temp_file("attn");
    save_checkpoint(p, ck);
    Checkpoint back = load_checkpoint(p);
    REQUIRE(encoders_equal(back.encoders, ck.encoders));
    REQUIRE(back.adam.m == ck.adam.m);
}

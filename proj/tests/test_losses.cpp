#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "milnce/losses.hpp"
#include "milnce/rng.hpp"

using namespace milnce;

namespace {

// Independent oracle: the same objectives evaluated by naive exponentiation
// in extended precision. Safe for desk-scale score magnitudes; the library
// path must agree while never exponentiating raw scores itself.
double naive_nce(double pos, const std::vector<double>& negs) {
    long double denom = std::exp(static_cast<long double>(pos));
    for (double n : negs) denom += std::exp(static_cast<long double>(n));
    return static_cast<double>(std::log(std::exp(static_cast<long double>(pos)) / denom));
}

double naive_mil_nce(const std::vector<double>& pos, const std::vector<double>& negs) {
    long double num = 0.0L;
    for (double p : pos) num += std::exp(static_cast<long double>(p));
    long double denom = num;
    for (double n : negs) denom += std::exp(static_cast<long double>(n));
    return static_cast<double>(std::log(num / denom));
}

SampleScores scores(std::vector<double> pos, std::vector<double> neg) {
    SampleScores s;
    s.positives = std::move(pos);
    s.negatives = std::move(neg);
    return s;
}

std::vector<double> random_scores(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_uniform(lo, hi);
    return v;
}

// Finite-difference check of one per-sample loss in score space.
void fd_check(LossKind kind, const SampleScores& s, double tol = 1e-7) {
    LossResult r = sample_loss(kind, s);
    const double h = 1e-6;
    auto probe = [&](SampleScores q) { return sample_loss(kind, q).value; };
    for (std::size_t i = 0; i < s.positives.size(); ++i) {
        SampleScores up = s, down = s;
        up.positives[i] += h;
        down.positives[i] -= h;
        double numeric = (probe(up) - probe(down)) / (2 * h);
        REQUIRE(std::abs(numeric - r.dPositives[i]) < tol);
    }
    for (std::size_t i = 0; i < s.negatives.size(); ++i) {
        SampleScores up = s, down = s;
        up.negatives[i] += h;
        down.negatives[i] -= h;
        double numeric = (probe(up) - probe(down)) / (2 * h);
        REQUIRE(std::abs(numeric - r.dNegatives[i]) < tol);
    }
    if (s.attn) {
        for (std::size_t i = 0; i < s.attn->size(); ++i) {
            SampleScores up = s, down = s;
            (*up.attn)[i] += h;
            (*down.attn)[i] -= h;
            double numeric = (probe(up) - probe(down)) / (2 * h);
            REQUIRE(std::abs(numeric - r.dAttn[i]) < tol);
        }
    }
}

}  // namespace

TEST_CASE("nce values against the naive-exponentiation oracle") {
    REQUIRE(nce(scores({0}, {0})).value ==
            Catch::Approx(std::log(0.5)).epsilon(1e-13));

    double expected = naive_nce(1.0, {0.0, 0.0});
    REQUIRE(nce(scores({1}, {0, 0})).value == Catch::Approx(expected).epsilon(1e-13));
    REQUIRE(expected == Catch::Approx(-0.5514447139320511).epsilon(1e-12));

    // Shifting every score leaves the ratio unchanged.
    SampleScores base = scores({0.3}, {-1.0, 0.7, 2.0});
    SampleScores shifted = base;
    shifted.positives[0] += 7.0;
    for (double& x : shifted.negatives) x += 7.0;
    REQUIRE(std::abs(nce(base).value - nce(shifted).value) < 1e-12);

    REQUIRE_THROWS_AS(nce(scores({1, 2}, {0})), std::invalid_argument);
    REQUIRE_THROWS_AS(nce(scores({}, {0})), std::invalid_argument);
    REQUIRE_THROWS_AS(nce(scores({1}, {})), std::invalid_argument);
}

TEST_CASE("mil_nce equal-score closed form and derived value") {
    // |P| = 5, |N| = 512, all scores equal -> log(5/517).
    SampleScores s = scores(std::vector<double>(5, 0.0), std::vector<double>(512, 0.0));
    REQUIRE(mil_nce(s).value == Catch::Approx(std::log(5.0 / 517.0)).margin(1e-9));
    REQUIRE(std::log(5.0 / 517.0) == Catch::Approx(-4.638604962074329).epsilon(1e-12));

    double expected = naive_mil_nce({1, -1}, {0, 0.5});
    REQUIRE(mil_nce(scores({1, -1}, {0, 0.5})).value ==
            Catch::Approx(expected).epsilon(1e-13));
    REQUIRE(expected == Catch::Approx(-0.6196392581308187).epsilon(1e-12));
}

TEST_CASE("mil_nce reduces to nce for singleton bags") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        SampleScores s = scores(random_scores(rng, 1), random_scores(rng, 1 + rng.next_below(8)));
        REQUIRE(std::abs(mil_nce(s).value - nce(s).value) < 1e-12);
    }
}

TEST_CASE("max_nce value, argmax-only gradient, and ordering vs mil_nce") {
    double expected = naive_nce(1.0, {0.0, 0.5});
    LossResult r = max_nce(scores({1, -1}, {0, 0.5}));
    REQUIRE(r.value == Catch::Approx(expected).epsilon(1e-13));
    REQUIRE(expected == Catch::Approx(-0.6802696706417346).epsilon(1e-12));
    REQUIRE(r.dPositives[1] == 0.0);
    REQUIRE(r.dPositives[0] > 0.0);

    // Single positive: identical to nce.
    SampleScores one = scores({0.4}, {0.1, -0.2});
    REQUIRE(max_nce(one).value == nce(one).value);

    // Tie routes to the lowest index.
    LossResult tie = max_nce(scores({0.7, 0.7}, {0.0}));
    REQUIRE(tie.dPositives[0] > 0.0);
    REQUIRE(tie.dPositives[1] == 0.0);

    Rng rng(202);
    for (int trial = 0; trial < 1000; ++trial) {
        SampleScores s = scores(random_scores(rng, 1 + rng.next_below(6)),
                                random_scores(rng, 1 + rng.next_below(10)));
        REQUIRE(max_nce(s).value <= mil_nce(s).value + 1e-15);
    }
}

TEST_CASE("attn_nce pooling, saturation and reduction") {
    // Uniform attention with positives {1, -1} pools to 0.
    SampleScores s = scores({1, -1}, {0, 0.5});
    s.attn = std::vector<double>{0.0, 0.0};
    double expected = naive_nce(0.0, {0.0, 0.5});
    REQUIRE(attn_nce(s).value == Catch::Approx(expected).epsilon(1e-13));
    REQUIRE(expected == Catch::Approx(-1.2943767694176432).epsilon(1e-12));

    // Saturated attention reduces to max_nce on the favored positive.
    SampleScores sat = s;
    sat.attn = std::vector<double>{50.0, -50.0};
    REQUIRE(attn_nce(sat).value == Catch::Approx(max_nce(s).value).margin(1e-9));

    // Single positive: softmax over one element is 1, so this is nce.
    SampleScores one = scores({0.8}, {0.0, -0.3});
    one.attn = std::vector<double>{-4.2};
    REQUIRE(attn_nce(one).value == Catch::Approx(nce(scores({0.8}, {0.0, -0.3})).value)
                                       .epsilon(1e-13));

    SampleScores missing = scores({1}, {0});
    REQUIRE_THROWS_AS(attn_nce(missing), std::invalid_argument);
}

TEST_CASE("attn_nce with uniform attention depends on positives via their mean") {
    Rng rng(303);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pos = random_scores(rng, 4);
        std::vector<double> neg = random_scores(rng, 6);
        double mean = 0.0;
        for (double p : pos) mean += p;
        mean /= 4.0;
        SampleScores a = scores(pos, neg);
        a.attn = std::vector<double>(4, 0.0);
        SampleScores b = scores(std::vector<double>(4, mean), neg);
        b.attn = std::vector<double>(4, 0.0);
        REQUIRE(attn_nce(a).value == Catch::Approx(attn_nce(b).value).epsilon(1e-12));
    }
}

TEST_CASE("max_margin hand-worked values") {
    Matrix sat = Matrix::from_rows({{1, 0}, {0, 1}});
    REQUIRE(max_margin(sat, 0.2).value == 0.0);

    Matrix flat(2, 2, std::vector<double>(4, 0.5));
    REQUIRE(max_margin(flat, 0.2).value == Catch::Approx(0.4).epsilon(1e-13));

    Matrix dominant = Matrix::from_rows({{2, 1}, {0.5, 1.7}});
    REQUIRE(max_margin(dominant, 0.0).value == 0.0);

    REQUIRE_THROWS_AS(max_margin(Matrix(2, 3), 0.2), std::invalid_argument);

    // Gradient vs finite differences.
    Rng rng(404);
    Matrix s(3, 3);
    for (double& x : s.data) x = rng.next_uniform(-1.0, 1.0);
    MaxMarginResult r = max_margin(s, 0.2);
    const double h = 1e-6;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        double saved = s.data[i];
        s.data[i] = saved + h;
        double up = max_margin(s, 0.2).value;
        s.data[i] = saved - h;
        double down = max_margin(s, 0.2).value;
        s.data[i] = saved;
        REQUIRE(std::abs((up - down) / (2 * h) - r.dScores.data[i]) < 1e-6);
    }
}

TEST_CASE("binary_ce values and saturation") {
    LossResult both = binary_ce(std::vector<double>{0.0}, std::vector<double>{0.0});
    REQUIRE(both.value == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-13));

    LossResult sat = binary_ce(std::vector<double>{50.0}, std::vector<double>{-50.0});
    REQUIRE(sat.value <= 1e-20);

    long double expected = -std::log(1.0L / (1.0L + std::exp(-1.0L))) -
                           std::log(1.0L - 0.5L);
    LossResult mixed = binary_ce(std::vector<double>{1.0}, std::vector<double>{0.0});
    REQUIRE(mixed.value == Catch::Approx(static_cast<double>(expected)).epsilon(1e-13));
    REQUIRE(static_cast<double>(expected) == Catch::Approx(1.0064088680781681).epsilon(1e-12));

    REQUIRE_THROWS_AS(binary_ce(std::vector<double>{}, std::vector<double>{0.0}),
                      std::invalid_argument);
}

TEST_CASE("shift invariance holds for the ratio losses and fails for binary_ce") {
    Rng rng(505);
    for (double c : {-100.0, 3.0, 1e3}) {
        SampleScores s = scores(random_scores(rng, 3), random_scores(rng, 5));
        s.attn = random_scores(rng, 3);
        SampleScores sh = s;
        for (double& x : sh.positives) x += c;
        for (double& x : sh.negatives) x += c;  // attention scores unshifted: they are weights

        REQUIRE(std::abs(mil_nce(s).value - mil_nce(sh).value) <= 1e-9);
        REQUIRE(std::abs(max_nce(s).value - max_nce(sh).value) <= 1e-9);
        REQUIRE(std::abs(attn_nce(s).value - attn_nce(sh).value) <= 1e-9);

        SampleScores s1 = scores({s.positives[0]}, s.negatives);
        SampleScores s1h = scores({sh.positives[0]}, sh.negatives);
        REQUIRE(std::abs(nce(s1).value - nce(s1h).value) <= 1e-9);

        Matrix m(3, 3);
        for (double& x : m.data) x = rng.next_uniform(-1.0, 1.0);
        Matrix mh = m;
        for (double& x : mh.data) x += c;
        REQUIRE(std::abs(max_margin(m, 0.2).value - max_margin(mh, 0.2).value) <= 1e-9);

        double b0 = binary_ce(s1.positives, s1.negatives).value;
        double b1 = binary_ce(s1h.positives, s1h.negatives).value;
        REQUIRE(std::abs(b0 - b1) > 1e-3);
    }
}

TEST_CASE("gradient signs: positives help, negatives hurt") {
    Rng rng(606);
    for (int trial = 0; trial < 200; ++trial) {
        SampleScores s = scores(random_scores(rng, 1 + rng.next_below(5)),
                                random_scores(rng, 1 + rng.next_below(8)));
        s.attn = random_scores(rng, s.positives.size());
        for (LossKind kind :
             {LossKind::mil_nce, LossKind::max_nce, LossKind::attn_nce}) {
            LossResult r = sample_loss(kind, s);
            for (double g : r.dPositives) REQUIRE(g >= 0.0);
            for (double g : r.dNegatives) REQUIRE(g <= 0.0);
        }
    }
}

TEST_CASE("values stay finite for scores up to 1e4 in magnitude") {
    Rng rng(707);
    for (int trial = 0; trial < 50; ++trial) {
        SampleScores s = scores(random_scores(rng, 3, -1e4, 1e4),
                                random_scores(rng, 5, -1e4, 1e4));
        s.attn = random_scores(rng, 3, -1e4, 1e4);
        REQUIRE(std::isfinite(mil_nce(s).value));
        REQUIRE(std::isfinite(max_nce(s).value));
        REQUIRE(std::isfinite(attn_nce(s).value));
        REQUIRE(std::isfinite(binary_ce(s.positives, s.negatives).value));
        for (double g : mil_nce(s).dPositives) REQUIRE(std::isfinite(g));
    }
}

TEST_CASE("per-sample gradients match finite differences in score space") {
    Rng rng(808);
    for (int trial = 0; trial < 25; ++trial) {
        SampleScores s = scores(random_scores(rng, 3), random_scores(rng, 4));
        s.attn = random_scores(rng, 3);
        fd_check(LossKind::mil_nce, s);
        fd_check(LossKind::attn_nce, s);
        SampleScores one = scores(random_scores(rng, 1), random_scores(rng, 4));
        fd_check(LossKind::nce, one);
        fd_check(LossKind::binary_ce, one);
    }
}

TEST_CASE("batch_objective means per-sample minimization values") {
    SampleScores a = scores({0.5}, {0.0, 0.1});
    SampleScores b = scores({-0.4}, {0.3, 0.2});
    std::vector<SampleScores> same{a, a};
    BatchObjective so = batch_objective(LossKind::nce, same);
    REQUIRE(so.loss == Catch::Approx(-nce(a).value).epsilon(1e-13));

    std::vector<SampleScores> mixed{a, b};
    BatchObjective mo = batch_objective(LossKind::nce, mixed);
    REQUIRE(mo.loss ==
            Catch::Approx(0.5 * (-nce(a).value - nce(b).value)).epsilon(1e-13));

    // Sample gradients come back scaled by 1/B with descent orientation.
    LossResult ra = nce(a);
    REQUIRE(mo.sampleGrads[0].dPositives[0] ==
            Catch::Approx(-0.5 * ra.dPositives[0]).epsilon(1e-13));

    REQUIRE_THROWS_AS(batch_objective(LossKind::nce, std::vector<SampleScores>{}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(batch_objective(LossKind::max_margin, mixed), std::invalid_argument);

    // binary_ce already minimizes; no sign flip.
    BatchObjective bo = batch_objective(LossKind::binary_ce, same);
    REQUIRE(bo.loss ==
            Catch::Approx(binary_ce(a.positives, a.negatives).value).epsilon(1e-13));
}

TEST_CASE("loss kind names round-trip") {
    for (std::size_t i = 0; i < kNumLossKinds; ++i) {
        auto kind = static_cast<LossKind>(i);
        REQUIRE(loss_kind_from_string(to_string(kind)) == kind);
    }
    REQUIRE_THROWS_AS(loss_kind_from_string("triplet"), std::invalid_argument);
}

#include <cmath>
#include <vector>

#include "core/gradcheck.hpp"
#include "core/rng.hpp"
#include "doctest.h"
#include "train/losses.hpp"
#include "train/metrics.hpp"

using namespace agcu;

namespace {

template <typename T>
Tensor<T> random_probs(Shape s, Rng& rng) {
    Tensor<T> t(std::move(s));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(0.0, 1.0));
    return t;
}

template <typename T>
Tensor<T> random_mask(Shape s, Rng& rng, double p = 0.5) {
    Tensor<T> t(std::move(s));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(0.0, 1.0) < p ? T(1) : T(0);
    return t;
}

// The 4x4 grid with |P| = 6 predicted, |G| = 4 true, and 3 overlapping pixels.
void hand_case(Tensor<double>& p, Tensor<double>& g) {
    p = Tensor<double>(Shape{1, 1, 4, 4});
    g = Tensor<double>(Shape{1, 1, 4, 4});
    for (int i = 0; i < 6; ++i) p[i] = 1.0;
    for (int i = 3; i < 7; ++i) g[i] = 1.0;
}

}  // namespace

TEST_CASE("tversky parameter validation") {
    CHECK_THROWS_AS((TverskyParams{-0.1, 0.7, 1e-6}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((TverskyParams{0.0, 0.0, 1e-6}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((TverskyParams{0.3, 0.7, 0.0}).validate(), std::invalid_argument);
    CHECK_NOTHROW((TverskyParams{}).validate());
}

TEST_CASE("tversky rejects malformed inputs") {
    Tape<double> t;
    Var p = t.constant(Tensor<double>(Shape{1, 4}));
    Var g_shape = t.constant(Tensor<double>(Shape{1, 5}));
    CHECK_THROWS_AS(tversky_index(t, p, g_shape, TverskyParams{}), std::invalid_argument);
    Var g_gray = t.constant(Tensor<double>::full(Shape{1, 4}, 0.5));
    CHECK_THROWS_AS(tversky_index(t, p, g_gray, TverskyParams{}), std::invalid_argument);
}

TEST_CASE("tversky hand case equals the dice score") {
    Tensor<double> p, g;
    hand_case(p, g);
    TverskyParams half{0.5, 0.5, 1e-12};
    CHECK(tversky_scalar(p, g, half) == doctest::Approx(0.6).epsilon(1e-9));

    Tape<double> t;
    Var tv = tversky_index(t, t.constant(p), t.constant(g), half);
    CHECK(t.value(tv)[0] == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("tversky tape and scalar versions agree") {
    Rng rng(31);
    TverskyParams params{};
    for (int rep = 0; rep < 20; ++rep) {
        Tensor<double> p = random_probs<double>(Shape{2, 1, 6, 6}, rng);
        Tensor<double> g = random_mask<double>(Shape{2, 1, 6, 6}, rng);
        Tape<double> t;
        Var tv = tversky_index(t, t.constant(p), t.constant(g), params);
        CHECK(t.value(tv)[0] == doctest::Approx(tversky_scalar(p, g, params)).epsilon(1e-12));
    }
}

TEST_CASE("perfect and disjoint predictions bound the index") {
    Rng rng(32);
    Tensor<double> g = random_mask<double>(Shape{1, 1, 8, 8}, rng);
    g[0] = 1.0;
    TverskyParams params{};
    CHECK(tversky_scalar(g, g, params) == doctest::Approx(1.0).epsilon(1e-6));

    Tensor<double> disjoint(g.shape());
    for (int64_t i = 0; i < g.numel(); ++i) disjoint[i] = 1.0 - g[i];
    CHECK(tversky_scalar(disjoint, g, params) < 1e-4);
}

TEST_CASE("alpha beta half matches soft dice on a thousand random maps") {
    Rng rng(33);
    TverskyParams half{0.5, 0.5, 1e-12};
    for (int rep = 0; rep < 1000; ++rep) {
        int64_t side = rng.uniform_int(2, 12);
        Tensor<double> p = random_probs<double>(Shape{1, 1, side, side}, rng);
        Tensor<double> g = random_mask<double>(Shape{1, 1, side, side}, rng);
        double tp = 0, fp = 0, fn = 0;
        for (int64_t i = 0; i < p.numel(); ++i) {
            tp += p[i] * g[i];
            fp += p[i] * (1.0 - g[i]);
            fn += (1.0 - p[i]) * g[i];
        }
        double soft_dice = 2.0 * tp / (tp + fp + fn + tp);
        CHECK(std::abs(tversky_scalar(p, g, half) - soft_dice) <= 1e-9);
    }
}

TEST_CASE("tversky is invariant to joint spatial permutation") {
    Rng rng(34);
    Tensor<double> p = random_probs<double>(Shape{1, 1, 5, 5}, rng);
    Tensor<double> g = random_mask<double>(Shape{1, 1, 5, 5}, rng);
    std::vector<int64_t> perm(25);
    for (int64_t i = 0; i < 25; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    Tensor<double> pp(p.shape()), gp(g.shape());
    for (int64_t i = 0; i < 25; ++i) {
        pp[perm[static_cast<size_t>(i)]] = p[i];
        gp[perm[static_cast<size_t>(i)]] = g[i];
    }
    TverskyParams params{};
    CHECK(tversky_scalar(p, g, params) == doctest::Approx(tversky_scalar(pp, gp, params)).epsilon(1e-12));
}

TEST_CASE("raising beta lowers the index when false negatives exist") {
    Rng rng(35);
    Tensor<double> p = random_probs<double>(Shape{1, 1, 6, 6}, rng);
    Tensor<double> g = random_mask<double>(Shape{1, 1, 6, 6}, rng);
    g[0] = 1.0;
    p[0] = 0.2;
    double prev = tversky_scalar(p, g, {0.3, 0.1, 1e-6});
    for (double beta : {0.3, 0.5, 0.7, 0.9}) {
        double cur = tversky_scalar(p, g, {0.3, beta, 1e-6});
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("coupled loss combines both maps") {
    Tensor<double> p, g;
    hand_case(p, g);
    TverskyParams params{0.5, 0.5, 1e-12};

    Tape<double> t;
    Var gv = t.constant(g);
    Var l = coupled_loss(t, t.constant(p), t.constant(g), gv, params);
    // p2 = G is perfect, p1 scores 0.6: loss = (1 - 1) + (1 - 0.6).
    CHECK(t.value(l)[0] == doctest::Approx(0.4).epsilon(1e-9));

    Tape<double> t2;
    Var gz = t2.constant(g);
    Var perfect = coupled_loss(t2, gz, gz, gz, params);
    CHECK(t2.value(perfect)[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("coupled loss gradients agree with finite differences") {
    Rng rng(36);
    Tensor<double> p1 = random_probs<double>(Shape{2, 1, 4, 4}, rng);
    Tensor<double> p2 = random_probs<double>(Shape{2, 1, 4, 4}, rng);
    Tensor<double> g = random_mask<double>(Shape{2, 1, 4, 4}, rng);
    TverskyParams params{};

    double err = check_gradients({&p1, &p2}, [&](Tape<double>& t) {
        return coupled_loss(t, t.parameter(p1), t.parameter(p2), t.constant(g), params);
    });
    CHECK(err < 1e-4);
}

TEST_CASE("confusion counts the hand grid") {
    Tensor<double> p, g;
    hand_case(p, g);
    ConfusionCounts c = confusion(p, g, 0.5);
    CHECK(c.tp == 3);
    CHECK(c.fp == 3);
    CHECK(c.fn == 1);
    CHECK(c.tn == 9);

    ImageMetrics m = image_metrics(c);
    CHECK(m.dice == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(m.iou == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.precision == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("confusion validates inputs") {
    Tensor<double> p(Shape{2, 2}), g(Shape{2, 2});
    CHECK_THROWS_AS(confusion(p, g, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(confusion(p, g, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(confusion(p, Tensor<double>(Shape{2, 3}), 0.5), std::invalid_argument);
    g[0] = 0.4;
    CHECK_THROWS_AS(confusion(p, g, 0.5), std::invalid_argument);
}

TEST_CASE("empty map conventions") {
    ImageMetrics both = image_metrics({0, 0, 0, 16});
    CHECK(both.dice == 1.0);
    CHECK(both.iou == 1.0);
    CHECK(both.recall == 1.0);
    CHECK(both.precision == 1.0);

    ImageMetrics pred_only = image_metrics({0, 5, 0, 11});
    CHECK(pred_only.dice == 0.0);
    CHECK(pred_only.recall == 0.0);
    CHECK(pred_only.precision == 0.0);

    ImageMetrics mask_only = image_metrics({0, 0, 5, 11});
    CHECK(mask_only.dice == 0.0);
    CHECK(mask_only.recall == 0.0);
    CHECK(mask_only.precision == 0.0);

    ImageMetrics perfect = image_metrics({7, 0, 0, 9});
    CHECK(perfect.dice == 1.0);
    CHECK(perfect.iou == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.precision == 1.0);
}

TEST_CASE("dice is two iou over one plus iou on binary maps") {
    Rng rng(37);
    for (int rep = 0; rep < 200; ++rep) {
        Tensor<double> p = random_mask<double>(Shape{1, 1, 6, 6}, rng, rng.uniform(0.2, 0.8));
        Tensor<double> g = random_mask<double>(Shape{1, 1, 6, 6}, rng, rng.uniform(0.2, 0.8));
        ImageMetrics m = image_metrics(confusion(p, g, 0.5));
        CHECK(m.dice == doctest::Approx(2.0 * m.iou / (1.0 + m.iou)).epsilon(1e-12));
    }
}

TEST_CASE("macro aggregation means and deviations") {
    ImageMetrics a{0.4, 0.3, 0.5, 0.6};
    ImageMetrics b{0.8, 0.5, 0.7, 0.2};
    MetricReport r = macro_aggregate({"a", "b"}, {a, b}, 0.5);
    CHECK(r.mean.dice == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.mean.iou == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(r.stddev.dice == doctest::Approx(std::sqrt(2 * 0.2 * 0.2)).epsilon(1e-9));

    MetricReport single = macro_aggregate({"x"}, {a}, 0.5);
    CHECK(single.mean.recall == a.recall);
    CHECK(single.stddev.dice == 0.0);

    MetricReport swapped = macro_aggregate({"b", "a"}, {b, a}, 0.5);
    CHECK(swapped.mean.dice == doctest::Approx(r.mean.dice).epsilon(1e-12));
    CHECK(swapped.stddev.precision == doctest::Approx(r.stddev.precision).epsilon(1e-12));

    CHECK_THROWS_AS(macro_aggregate({}, {}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(macro_aggregate({"a"}, {a, b}, 0.5), std::invalid_argument);
}

TEST_CASE("report serialization carries every image") {
    MetricReport r = macro_aggregate({"img1", "img2"}, {{0.5, 0.4, 0.3, 0.2}, {1, 1, 1, 1}}, 0.5);
    std::string csv = r.to_csv();
    CHECK(csv.find("id,dice,iou,recall,precision") == 0);
    CHECK(csv.find("img1,0.5,0.4,0.3,0.2") != std::string::npos);
    CHECK(csv.find("mean,0.75,0.7,0.65,0.6") != std::string::npos);
    std::string js = r.to_json();
    CHECK(js.find("\"img2\"") != std::string::npos);
    CHECK(js.find("\"threshold\"") != std::string::npos);
}

TEST_CASE("six pixel curve oracle") {
    std::vector<double> scores{0.9, 0.8, 0.7, 0.4, 0.3, 0.1};
    std::vector<uint8_t> labels{1, 1, 0, 1, 0, 0};
    CurveData c = curves(scores, labels);
    CHECK(c.auc == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK(c.map == doctest::Approx(11.0 / 12.0).epsilon(1e-12));
    REQUIRE(c.roc.size() == 7);
    CHECK(c.roc.front() == std::pair<double, double>{0.0, 0.0});
    CHECK(c.roc.back() == std::pair<double, double>{1.0, 1.0});
}

TEST_CASE("auc equals the pairwise ranking probability") {
    Rng rng(38);
    for (int rep = 0; rep < 30; ++rep) {
        int64_t n = rng.uniform_int(10, 1000);
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<uint8_t> labels(static_cast<size_t>(n));
        bool tie_heavy = rep % 2 == 0;
        int64_t pos = 0;
        for (auto& s : scores)
            s = tie_heavy ? std::round(rng.uniform(0.0, 1.0) * 8.0) / 8.0 : rng.uniform(0.0, 1.0);
        for (auto& l : labels) {
            l = rng.uniform(0.0, 1.0) < 0.4 ? 1 : 0;
            pos += l;
        }
        if (pos == 0) labels[0] = 1;
        if (pos == n) labels[0] = 0;

        CurveData c = curves(scores, labels);
        double wins = 0, pairs = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (!labels[i]) continue;
            for (size_t j = 0; j < scores.size(); ++j) {
                if (labels[j]) continue;
                pairs += 1.0;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        }
        CHECK(std::abs(c.auc - wins / pairs) <= 1e-9);
    }
}

TEST_CASE("degenerate curve inputs") {
    std::vector<double> scores{0.2, 0.4, 0.9};
    CHECK_THROWS_AS(curves(scores, std::vector<uint8_t>{1, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(curves(scores, std::vector<uint8_t>{0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(curves(scores, std::vector<uint8_t>{1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(curves({}, {}), std::invalid_argument);

    CurveData perfect = curves(std::vector<double>{0.9, 0.8, 0.2, 0.1},
                               std::vector<uint8_t>{1, 1, 0, 0});
    CHECK(perfect.auc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(perfect.map == doctest::Approx(1.0).epsilon(1e-12));

    CurveData chance = curves(std::vector<double>{0.5, 0.5, 0.5, 0.5},
                              std::vector<uint8_t>{1, 0, 1, 0});
    CHECK(chance.auc == doctest::Approx(0.5).epsilon(1e-12));
    REQUIRE(chance.roc.size() == 2);
}

TEST_CASE("curve serialization") {
    CurveData c = curves(std::vector<double>{0.9, 0.1}, std::vector<uint8_t>{1, 0});
    CHECK(c.roc_csv().find("fpr,tpr\n0,0\n") == 0);
    CHECK(c.pr_csv().find("recall,precision\n") == 0);
}

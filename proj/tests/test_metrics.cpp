#include "doctest_torch.hpp"

#include <random>

#include "causalseg/errors.hpp"
#include "causalseg/metrics.hpp"

using namespace causalseg;

namespace {

torch::Tensor grid(std::initializer_list<int> values, int64_t h, int64_t w) {
    return torch::tensor(std::vector<int>(values), torch::kInt).view({h, w}).to(torch::kUInt8);
}

// Pixel-by-pixel recount without tensor reductions.
struct Counts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts recount(const torch::Tensor& p, const torch::Tensor& g) {
    Counts c;
    auto pf = p.flatten().to(torch::kInt), gf = g.flatten().to(torch::kInt);
    for (int64_t i = 0; i < pf.numel(); ++i) {
        const bool a = pf[i].item<int>() != 0, b = gf[i].item<int>() != 0;
        if (a && b) ++c.tp;
        else if (a) ++c.fp;
        else if (b) ++c.fn;
        else ++c.tn;
    }
    return c;
}

torch::Tensor random_mask(std::mt19937_64& rng, int64_t h, int64_t w, double p) {
    std::bernoulli_distribution coin(p);
    auto m = torch::zeros({h, w}, torch::kUInt8);
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) m[i][j] = static_cast<int>(coin(rng));
    return m;
}

}  // namespace

TEST_CASE("2x2: gt top row, prediction left column") {
    auto gt = grid({1, 1, 0, 0}, 2, 2);
    auto pred = grid({1, 0, 1, 0}, 2, 2);
    CHECK(class_iou(pred, gt, true) == 1.0 / 3.0);
    CHECK(class_iou(pred, gt, false) == 1.0 / 3.0);
    CHECK(miou(pred, gt) == 1.0 / 3.0);
    CHECK(miou(pred, gt, MiouMode::Foreground) == 1.0 / 3.0);
    CHECK(dice(pred, gt) == 0.5);
}

TEST_CASE("dice with |P & G| = 1, |P| = 1, |G| = 2 is 2/3") {
    auto gt = grid({1, 1, 0, 0}, 1, 4);
    auto pred = grid({1, 0, 0, 0}, 1, 4);
    CHECK(dice(pred, gt) == 2.0 / 3.0);
}

TEST_CASE("empty and perfect cases") {
    auto empty = torch::zeros({3, 3}, torch::kUInt8);
    auto full = torch::ones({3, 3}, torch::kUInt8);
    CHECK(dice(empty, empty) == 1.0);
    CHECK(miou(empty, empty) == 1.0);
    CHECK(dice(full, full) == 1.0);
    CHECK(miou(full, full) == 1.0);
    CHECK(dice(empty, full) == 0.0);
    CHECK(miou(empty, full) == 0.0);
    CHECK_THROWS_AS(dice(empty, torch::zeros({2, 3}, torch::kUInt8)), UserError);
    CHECK_THROWS_AS(parse_miou_mode("three_class"), UserError);
}

TEST_CASE("property: symmetric, bounded, and equal to a pixel recount") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = random_mask(rng, 5, 6, 0.4), g = random_mask(rng, 5, 6, 0.3);
        const auto c = recount(p, g);
        const double d = dice(p, g), m = miou(p, g);
        CHECK(d == dice(g, p));
        CHECK(m == miou(g, p));
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
        const double want_d = (c.tp + c.fp + c.fn) == 0 ? 1.0 : 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
        const double fg = (c.tp + c.fp + c.fn) == 0 ? 1.0 : c.tp / static_cast<double>(c.tp + c.fp + c.fn);
        const double bg = (c.tn + c.fp + c.fn) == 0 ? 1.0 : c.tn / static_cast<double>(c.tn + c.fp + c.fn);
        CHECK(d == doctest::Approx(want_d).epsilon(1e-15));
        CHECK(m == doctest::Approx(0.5 * (fg + bg)).epsilon(1e-15));
    }
}

TEST_CASE("property: adding a true-positive pixel never lowers dice") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        auto p = random_mask(rng, 4, 4, 0.3), g = random_mask(rng, 4, 4, 0.5);
        auto missed = (g.to(torch::kBool) & p.to(torch::kBool).logical_not()).nonzero();
        if (missed.size(0) == 0) continue;
        auto q = p.clone();
        q[missed[0][0].item<int64_t>()][missed[0][1].item<int64_t>()] = 1;
        CHECK(dice(q, g) >= dice(p, g));
        CHECK(class_iou(q, g, true) >= class_iou(p, g, true));
    }
}

TEST_CASE("property: tiling an image does not change its scores") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_mask(rng, 3, 4, 0.5), g = random_mask(rng, 3, 4, 0.5);
        auto p2 = torch::cat({p, p}, 0), g2 = torch::cat({g, g}, 0);
        CHECK(dice(p2, g2) == doctest::Approx(dice(p, g)).epsilon(1e-15));
        CHECK(miou(p2, g2) == doctest::Approx(miou(p, g)).epsilon(1e-15));
    }
}

TEST_CASE("accumulator thresholds logits at zero and averages per image") {
    auto gt = torch::zeros({2, 1, 2, 2}, torch::kUInt8);
    gt[0][0][0][0] = 1;
    gt[0][0][0][1] = 1;
    gt[1][0][1][1] = 1;
    auto logits = torch::full({2, 1, 2, 2}, -1.0f);
    logits[0][0][0][0] = 2.0f;   // image 0: dice 2/3
    logits[1][0][1][1] = 0.5f;   // image 1: perfect
    logits[1][0][0][0] = 0.0f;   // exactly zero is background
    MetricsAccumulator acc;
    acc.add_batch(logits, gt);
    auto r = acc.report();
    CHECK(r.n_images == 2);
    CHECK(r.per_image_dice[0] == 2.0 / 3.0);
    CHECK(r.per_image_dice[1] == 1.0);
    CHECK(r.dice == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0).epsilon(1e-15));
    CHECK(r.to_text().find("n_images=2") != std::string::npos);
}

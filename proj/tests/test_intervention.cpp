#include "doctest_torch.hpp"

#include "causalseg/errors.hpp"
#include "causalseg/intervention.hpp"
#include "causalseg/model.hpp"
#include "test_support.hpp"

using namespace causalseg;

TEST_CASE("zero logits give M = 0.5 everywhere") {
    auto m = masks_from_logits(torch::zeros({2, 1, 3, 4}));
    CHECK(torch::equal(m.keep, torch::full({2, 1, 3, 4}, 0.5f)));
    CHECK(torch::equal(m.complement, torch::full({2, 1, 3, 4}, 0.5f)));
}

TEST_CASE("property: M + (1 - M) = 1 within 1 ulp") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        torch::manual_seed(seed);
        auto m = masks_from_logits(torch::randn({2, 1, 8, 8}) * 6.0);
        auto sum = m.keep + m.complement;
        CHECK((sum - 1.0).abs().max().item<float>() <= testing::ulp(1.0f));
        CHECK(m.keep.min().item<float>() >= 0.0f);
        CHECK(m.keep.max().item<float>() <= 1.0f);
    }
}

TEST_CASE("coordinate channels span [-1, 1]: x along columns, y along rows") {
    auto c = coordinate_channels(3, 4, torch::kFloat);
    CHECK(c.sizes() == torch::IntArrayRef({1, 2, 3, 4}));
    const float xs[] = {-1.0f, -1.0f / 3.0f, 1.0f / 3.0f, 1.0f};
    for (int64_t j = 0; j < 4; ++j) {
        CHECK(c[0][0][0][j].item<float>() == doctest::Approx(xs[j]).epsilon(1e-6));
        CHECK(c[0][0][2][j].item<float>() == doctest::Approx(xs[j]).epsilon(1e-6));
    }
    const float ys[] = {-1.0f, 0.0f, 1.0f};
    for (int64_t i = 0; i < 3; ++i) CHECK(c[0][1][i][3].item<float>() == doctest::Approx(ys[i]).epsilon(1e-6));
}

TEST_CASE("split of a constant-2 map with M = 0.25 gives 0.5 and 1.5") {
    auto f = torch::full({1, 3, 2, 2}, 2.0f);
    MaskPair m{torch::full({1, 1, 2, 2}, 0.25f), torch::full({1, 1, 2, 2}, 0.75f)};
    auto [causal, confounding] = split(f, m);
    CHECK(torch::equal(causal, torch::full({1, 3, 2, 2}, 0.5f)));
    CHECK(torch::equal(confounding, torch::full({1, 3, 2, 2}, 1.5f)));
}

TEST_CASE("saturated mask sends everything to the causal stream") {
    auto f = torch::randn({1, 4, 5, 5});
    auto m = masks_from_logits(torch::full({1, 1, 5, 5}, 40.0f));
    auto [causal, confounding] = split(f, m);
    CHECK(torch::equal(causal, f));
    CHECK(confounding.abs().max().item<float>() == 0.0f);
}

TEST_CASE("property: F^c + F^s reconstructs F within 4 eps |F|") {
    const float eps = std::numeric_limits<float>::epsilon();
    for (uint64_t seed = 0; seed < 20; ++seed) {
        torch::manual_seed(seed);
        Masker masker(6, 4);
        auto f = torch::randn({2, 6, 7, 7}) * 3.0;
        auto [causal, confounding] = split(f, make_masks(masker, f));
        auto err = (causal + confounding - f).abs();
        CHECK(err.le(4.0f * eps * f.abs()).all().item<bool>());
    }
}

TEST_CASE("masker output depends on the input") {
    torch::manual_seed(1);
    Masker masker(4, 8);
    auto a = make_masks(masker, torch::randn({1, 4, 6, 6}));
    auto b = make_masks(masker, torch::randn({1, 4, 6, 6}));
    CHECK_FALSE(torch::allclose(a.keep, b.keep));
    CHECK(a.keep.sizes() == torch::IntArrayRef({1, 1, 6, 6}));
}

TEST_CASE("gradient check through make_masks and split") {
    torch::manual_seed(23);
    Masker masker(2, 3);
    masker->to(torch::kDouble);
    auto f = torch::randn({1, 2, 4, 4}, torch::kDouble).requires_grad_(true);
    auto loss = [&] {
        auto [causal, confounding] = split(f, make_masks(masker, f));
        return testing::probe(causal, 3) + testing::probe(confounding, 5);
    };
    std::vector<torch::Tensor> inputs{f};
    for (auto& p : masker->parameters()) inputs.push_back(p);
    CHECK(testing::gradient_relative_error(loss, inputs) < 1e-4);
}

TEST_CASE("split rejects a mask of the wrong spatial size") {
    MaskPair m = masks_from_logits(torch::zeros({1, 1, 3, 3}));
    CHECK_THROWS_AS(split(torch::zeros({1, 2, 4, 4}), m), UserError);
}

TEST_CASE("fusion brings every level to the finest grid") {
    ScaleFusion fuse(FusionOptions{{8, 12, 16}, 6, 10, 3, 3, 4, true});
    auto out = fuse->forward({torch::randn({2, 8, 28, 28}), torch::randn({2, 12, 14, 14}), torch::randn({2, 16, 7, 7})});
    CHECK(out.sizes() == torch::IntArrayRef({2, 10, 28, 28}));

    ScaleFusion single(FusionOptions{{8}, 6, 10, 3, 3, 4, true});
    CHECK(single->forward({torch::randn({1, 8, 5, 5})}).sizes() == torch::IntArrayRef({1, 10, 5, 5}));
    CHECK_THROWS_AS(fuse->forward({torch::randn({1, 8, 8, 8})}), UserError);

    ScaleFusion direct(FusionOptions{{8, 12, 16}, 6, 10, 3, 3, 4, false});
    CHECK(direct->forward({torch::randn({1, 8, 8, 8}), torch::randn({1, 12, 4, 4}), torch::randn({1, 16, 2, 2})})
              .sizes() == torch::IntArrayRef({1, 10, 8, 8}));
}

TEST_CASE("an all-zero stream fuses to the reduce bias") {
    ScaleFusion fuse(FusionOptions{{4, 4}, 3, 5, 3, 3, 4, true});
    {
        torch::NoGradGuard ng;
        for (auto& p : fuse->projections) p->bias.zero_();
    }
    auto out = fuse->forward({torch::zeros({1, 4, 8, 8}), torch::zeros({1, 4, 4, 4})});
    auto expected = fuse->reduce->bias.view({1, 5, 1, 1}).expand_as(out);
    CHECK(torch::allclose(out, expected, 0.0, 1e-7));
}

TEST_CASE("model exposes one mask pair per level in eval mode; the ablation has none") {
    auto cfg = testing::unit_config();
    CausalSegModel model(cfg, 40, 2);
    model->eval();
    torch::NoGradGuard ng;
    auto ids = torch::tensor({{1, 5, 2}}, torch::kLong);
    auto out = model->forward(torch::randn({1, 1, 64, 64}), ids, torch::tensor({3}, torch::kLong));
    REQUIRE(out.masks.size() == 3);
    CHECK(out.masks[0].keep.sizes() == torch::IntArrayRef({1, 1, 8, 8}));
    CHECK(out.logits_causal.sizes() == torch::IntArrayRef({1, 1, 64, 64}));
    CHECK(out.logits_confounding.sizes() == torch::IntArrayRef({1, 1, 64, 64}));

    cfg.causal_intervention = false;
    CausalSegModel ablation(cfg, 40, 2);
    ablation->eval();
    auto plain = ablation->forward(torch::randn({1, 1, 64, 64}), ids, torch::tensor({3}, torch::kLong));
    CHECK(plain.masks.empty());
    CHECK_FALSE(plain.logits_confounding.defined());
    CHECK(ablation->maskers.empty());
}

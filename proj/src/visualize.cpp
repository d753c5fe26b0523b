#include "causalseg/visualize.hpp"

#include <algorithm>
#include <cmath>

#include "causalseg/data.hpp"
#include "causalseg/errors.hpp"

namespace causalseg {

namespace F = torch::nn::functional;

Prediction predict(Segmenter& seg, const Image8& image, const std::string& text) {
    seg.model->eval();
    torch::NoGradGuard no_grad;
    auto pixels = image_to_tensor(image, seg.config).unsqueeze(0);
    auto [ids, lengths] = stack_queries({seg.tokenizer->tokenize(text, seg.config.max_text_len)},
                                        seg.tokenizer->specials().eos);
    auto out = seg.model->forward(pixels, ids, lengths);
    Prediction p;
    p.logits = out.logits_causal[0][0];
    p.foreground = p.logits.gt(0);
    if (!out.masks.empty()) p.causal_mask = out.masks.front().keep[0][0];
    return p;
}

Image8 prediction_image(const Prediction& p) {
    auto fg = p.foreground.to(torch::kUInt8).mul(255).contiguous();
    Image8 out(fg.size(1), fg.size(0), 1);
    std::copy_n(fg.data_ptr<uint8_t>(), out.pixels.size(), out.pixels.begin());
    return out;
}

std::array<uint8_t, 3> heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    auto channel = [&](double centre) {
        return static_cast<uint8_t>(std::lround(255.0 * std::clamp(1.5 - std::abs(4.0 * v - centre), 0.0, 1.0)));
    };
    return {channel(3.0), channel(2.0), channel(1.0)};
}

Image8 render_panel(const Segmenter& seg, const Image8& image, const Prediction& p, const std::optional<Image8>& gt) {
    const int64_t s = seg.config.image_size;
    const auto& cfg = seg.config;

    auto gray = (image_to_tensor(image, cfg)[0] * cfg.pixel_std + cfg.pixel_mean)
                    .clamp(0.0, 1.0)
                    .mul(255.0)
                    .round()
                    .to(torch::kUInt8)
                    .contiguous();
    auto gray_a = gray.accessor<uint8_t, 2>();
    auto fg = p.foreground.contiguous();
    auto fg_a = fg.accessor<bool, 2>();
    torch::Tensor gt_t = gt ? mask_to_tensor(*gt, s)[0].contiguous() : torch::Tensor();
    torch::Tensor heat;
    if (p.causal_mask.defined()) {
        heat = F::interpolate(p.causal_mask.unsqueeze(0).unsqueeze(0),
                              F::InterpolateFuncOptions().size(std::vector<int64_t>{s, s}).mode(torch::kNearest))[0][0]
                   .to(torch::kDouble)
                   .contiguous();
    }

    Image8 panel(4 * s, s, 3);
    for (int64_t y = 0; y < s; ++y) {
        for (int64_t x = 0; x < s; ++x) {
            const uint8_t g = gray_a[y][x];
            for (int c = 0; c < 3; ++c) panel.at(x, y, c) = g;

            const uint8_t truth = gt ? (gt_t.data_ptr<float>()[y * s + x] > 0 ? 255 : 0) : 32;
            for (int c = 0; c < 3; ++c) panel.at(s + x, y, c) = truth;

            const bool on = fg_a[y][x];
            panel.at(2 * s + x, y, 0) = on ? 255 : g;
            panel.at(2 * s + x, y, 1) = on ? 0 : g;
            panel.at(2 * s + x, y, 2) = on ? 0 : g;

            const auto color = heat.defined() ? heat_color(heat.data_ptr<double>()[y * s + x]) : std::array<uint8_t, 3>{0, 0, 0};
            for (int c = 0; c < 3; ++c) panel.at(3 * s + x, y, c) = color[static_cast<size_t>(c)];
        }
    }
    return panel;
}

}  // namespace causalseg

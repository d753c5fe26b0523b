#include "causalseg/intervention.hpp"

#include "causalseg/errors.hpp"

namespace causalseg {

torch::Tensor coordinate_channels(int64_t height, int64_t width, const torch::TensorOptions& options) {
    auto xs = torch::linspace(-1.0, 1.0, width, options).view({1, 1, 1, width}).expand({1, 1, height, width});
    auto ys = torch::linspace(-1.0, 1.0, height, options).view({1, 1, height, 1}).expand({1, 1, height, width});
    return torch::cat({xs, ys}, 1);
}

MaskerImpl::MaskerImpl(int64_t in_channels, int64_t hidden_channels) {
    coord_conv = register_module(
        "coord_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels + 2, hidden_channels, 3).padding(1)));
    mask_conv = register_module("mask_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden_channels, 1, 3).padding(1)));
}

torch::Tensor MaskerImpl::forward(const torch::Tensor& features) {
    const int64_t batch = features.size(0);
    auto coords = coordinate_channels(features.size(2), features.size(3), features.options())
                      .expand({batch, 2, features.size(2), features.size(3)});
    auto h = torch::relu(coord_conv(torch::cat({features, coords}, 1)));
    return mask_conv(h);
}

MaskPair masks_from_logits(const torch::Tensor& logits) {
    auto keep = torch::sigmoid(logits);
    return {keep, 1.0 - keep};
}

MaskPair make_masks(Masker& masker, const torch::Tensor& features) { return masks_from_logits(masker->forward(features)); }

std::pair<torch::Tensor, torch::Tensor> split(const torch::Tensor& features, const MaskPair& masks) {
    if (features.dim() != 4 || masks.keep.dim() != 4 || masks.keep.size(0) != features.size(0) ||
        masks.keep.size(2) != features.size(2) || masks.keep.size(3) != features.size(3) || masks.keep.size(1) != 1)
        throw UserError("mask spatial size does not match the feature map");
    return {masks.keep * features, masks.complement * features};
}

ScaleFusionImpl::ScaleFusionImpl(const FusionOptions& options) : options_(options) {
    if (options.level_channels.empty()) throw UserError("fusion needs at least one pyramid level");
    for (size_t i = 0; i < options.level_channels.size(); ++i) {
        const int64_t channels = options.level_channels[i];
        std::vector<Carafe> chain;
        if (i > 0) {
            CarafeOptions co{channels, 2, options.k_up, options.k_enc, options.compressed_channels};
            const size_t steps = options.chained ? i : 1;
            if (!options.chained) co.sigma = int64_t{1} << i;
            for (size_t s = 0; s < steps; ++s)
                chain.push_back(register_module("carafe" + std::to_string(i) + "_" + std::to_string(s), Carafe(co)));
        }
        upsamplers.push_back(std::move(chain));
        projections.push_back(register_module(
            "proj" + std::to_string(i),
            torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, options.projected_width, 1))));
    }
    const auto concat = options.projected_width * static_cast<int64_t>(options.level_channels.size());
    reduce = register_module("reduce", torch::nn::Conv2d(torch::nn::Conv2dOptions(concat, options.out_channels, 1)));
}

torch::Tensor ScaleFusionImpl::forward(const std::vector<torch::Tensor>& levels) {
    if (levels.size() != options_.level_channels.size())
        throw UserError("fusion expects " + std::to_string(options_.level_channels.size()) + " levels, got " +
                        std::to_string(levels.size()));
    const int64_t h = levels.front().size(2), w = levels.front().size(3);
    std::vector<torch::Tensor> projected;
    for (size_t i = 0; i < levels.size(); ++i) {
        auto x = levels[i];
        for (auto& up : upsamplers[i]) x = up->forward(x);
        if (x.size(2) != h || x.size(3) != w)
            throw UserError("pyramid level " + std::to_string(i) + " does not reach the finest grid");
        projected.push_back(projections[i]->forward(x));
    }
    return reduce(torch::cat(projected, 1));
}

}  // namespace causalseg

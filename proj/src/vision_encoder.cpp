#include "causalseg/vision_encoder.hpp"

#include "causalseg/errors.hpp"

namespace causalseg {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(false));
}

torch::nn::AvgPool2d pool(int64_t stride) {
    return torch::nn::AvgPool2d(torch::nn::AvgPool2dOptions(stride).stride(stride).ceil_mode(true));
}

}  // namespace

BackboneOptions BackboneOptions::tiny() { return {}; }

BackboneOptions BackboneOptions::rn101() {
    BackboneOptions o;
    o.stem_width = 64;
    o.layers = {3, 4, 23, 3};
    o.planes = {64, 128, 256, 512};
    return o;
}

std::array<int64_t, 3> BackboneOptions::pyramid_channels() const {
    return {planes[1] * BottleneckImpl::kExpansion, planes[2] * BottleneckImpl::kExpansion,
            planes[3] * BottleneckImpl::kExpansion};
}

BottleneckImpl::BottleneckImpl(int64_t inplanes, int64_t planes, int64_t stride) : stride_(stride) {
    conv1 = register_module("conv1", conv(inplanes, planes, 1));
    bn1 = register_module("bn1", torch::nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3));
    bn2 = register_module("bn2", torch::nn::BatchNorm2d(planes));
    if (stride > 1) avgpool = register_module("avgpool", pool(stride));
    conv3 = register_module("conv3", conv(planes, planes * kExpansion, 1));
    bn3 = register_module("bn3", torch::nn::BatchNorm2d(planes * kExpansion));

    if (stride > 1 || inplanes != planes * kExpansion) {
        // Indices 0/1/2 match CLIP's OrderedDict("-1", "0", "1").
        downsample = register_module(
            "downsample", torch::nn::Sequential({
                              {"-1", stride > 1 ? torch::nn::AnyModule(pool(stride))
                                                : torch::nn::AnyModule(torch::nn::Identity())},
                              {"0", torch::nn::AnyModule(conv(inplanes, planes * kExpansion, 1))},
                              {"1", torch::nn::AnyModule(torch::nn::BatchNorm2d(planes * kExpansion))},
                          }));
    }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = torch::relu(bn2(conv2(out)));
    if (stride_ > 1) out = avgpool(out);
    out = bn3(conv3(out));
    auto identity = downsample ? downsample->forward(x) : x;
    return torch::relu(out + identity);
}

VisionEncoderImpl::VisionEncoderImpl(const BackboneOptions& options) : options_(options) {
    const int64_t w = options.stem_width;
    conv1 = register_module("conv1", conv(options.in_channels, w / 2, 3, 2));
    bn1 = register_module("bn1", torch::nn::BatchNorm2d(w / 2));
    conv2 = register_module("conv2", conv(w / 2, w / 2, 3));
    bn2 = register_module("bn2", torch::nn::BatchNorm2d(w / 2));
    conv3 = register_module("conv3", conv(w / 2, w, 3));
    bn3 = register_module("bn3", torch::nn::BatchNorm2d(w));
    avgpool = register_module("avgpool", pool(2));

    int64_t inplanes = w;
    for (size_t s = 0; s < 4; ++s) {
        torch::nn::Sequential stage;
        const int64_t stride = s == 0 ? 1 : 2;
        for (int64_t b = 0; b < options.layers[s]; ++b) {
            stage->push_back(Bottleneck(inplanes, options.planes[s], b == 0 ? stride : 1));
            inplanes = options.planes[s] * BottleneckImpl::kExpansion;
        }
        if (options.layers[s] == 0 && s > 0) throw UserError("backbone stages 2-4 need at least one block");
        stages_[s] = register_module("layer" + std::to_string(s + 1), stage);
    }
}

FeaturePyramid VisionEncoderImpl::forward(const torch::Tensor& image) {
    TORCH_CHECK(image.dim() == 4 && image.size(1) == options_.in_channels, "image must be [B, ", options_.in_channels,
                ", H, W]");
    auto x = torch::relu(bn1(conv1(image)));
    x = torch::relu(bn2(conv2(x)));
    x = torch::relu(bn3(conv3(x)));
    x = avgpool(x);
    if (!stages_[0]->is_empty()) x = stages_[0]->forward(x);

    FeaturePyramid pyramid;
    int64_t stride = 8;
    for (size_t s = 1; s < 4; ++s, stride *= 2) {
        x = stages_[s]->forward(x);
        pyramid.levels.push_back(x);
        pyramid.strides.push_back(stride);
    }
    return pyramid;
}

torch::Tensor adapt_input_channels(const torch::Tensor& rgb_stem_weight) {
    TORCH_CHECK(rgb_stem_weight.dim() == 4 && rgb_stem_weight.size(1) == 3, "expected a [O, 3, k, k] stem kernel");
    return rgb_stem_weight.sum(1, /*keepdim=*/true);
}

}  // namespace causalseg

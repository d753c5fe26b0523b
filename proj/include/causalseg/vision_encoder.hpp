#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

namespace causalseg {

/// Stage-2/3/4 activations at strides 8, 16, 32.
struct FeaturePyramid {
    std::vector<torch::Tensor> levels;
    std::vector<int64_t> strides;
};

struct BackboneOptions {
    int64_t in_channels = 1;
    int64_t stem_width = 16;
    /// Residual blocks per stage 1..4; stage 1 may be empty.
    std::array<int64_t, 4> layers{0, 1, 1, 1};
    /// Bottleneck widths per stage; a stage outputs 4x its bottleneck width.
    std::array<int64_t, 4> planes{4, 8, 16, 32};

    static BackboneOptions tiny();   // stage widths 32/64/128
    static BackboneOptions rn101();  // CLIP RN101: 512/1024/2048

    std::array<int64_t, 3> pyramid_channels() const;
};

/// CLIP's anti-aliased bottleneck: strided blocks downsample with an average
/// pool after the 3x3 conv and on the shortcut.
class BottleneckImpl : public torch::nn::Module {
public:
    BottleneckImpl(int64_t inplanes, int64_t planes, int64_t stride);
    torch::Tensor forward(const torch::Tensor& x);

    static constexpr int64_t kExpansion = 4;

private:
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
    torch::nn::AvgPool2d avgpool{nullptr};
    torch::nn::Sequential downsample{nullptr};
    int64_t stride_;
};
TORCH_MODULE(Bottleneck);

/// Residual CNN with CLIP's three-conv stem. Parameter names follow CLIP's
/// visual tower (conv1, bn1, ..., layer1..layer4) so checkpoints map by prefix.
class VisionEncoderImpl : public torch::nn::Module {
public:
    explicit VisionEncoderImpl(const BackboneOptions& options);

    /// image: [B, 1, H, W] normalised.
    FeaturePyramid forward(const torch::Tensor& image);

    const BackboneOptions& options() const { return options_; }

private:
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
    torch::nn::AvgPool2d avgpool{nullptr};
    std::array<torch::nn::Sequential, 4> stages_;
    BackboneOptions options_;
};
TORCH_MODULE(VisionEncoder);

/// Collapses a pretrained [O, 3, k, k] stem kernel to [O, 1, k, k] by summing
/// its input-channel slices. A grayscale image through the result matches the
/// same image replicated to three channels through the original.
torch::Tensor adapt_input_channels(const torch::Tensor& rgb_stem_weight);

/// ceil(size / stride), the grid of a pyramid level.
inline int64_t level_extent(int64_t size, int64_t stride) { return (size + stride - 1) / stride; }

}  // namespace causalseg

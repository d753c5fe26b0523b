#pragma once

#include <vector>

#include <torch/torch.h>

#include "causalseg/carafe.hpp"

namespace causalseg {

/// Complementary attention masks, each [B, 1, h, w]: `keep` attends to the
/// causal stream, `complement` = 1 - keep to the confounding stream.
struct MaskPair {
    torch::Tensor keep;
    torch::Tensor complement;
};

struct SplitFeatures {
    std::vector<torch::Tensor> causal;
    std::vector<torch::Tensor> confounding;
};

/// [1, 2, h, w] coordinate planes in [-1, 1]: channel 0 varies along x
/// (columns), channel 1 along y (rows).
torch::Tensor coordinate_channels(int64_t height, int64_t width, const torch::TensorOptions& options);

/// Coordinate convolution (features + 2 coordinate planes, 3x3) followed by
/// a 3x3 convolution to one channel. Outputs pre-sigmoid mask logits.
class MaskerImpl : public torch::nn::Module {
public:
    MaskerImpl(int64_t in_channels, int64_t hidden_channels);
    torch::Tensor forward(const torch::Tensor& features);

    torch::nn::Conv2d coord_conv{nullptr};
    torch::nn::Conv2d mask_conv{nullptr};
};
TORCH_MODULE(Masker);

MaskPair masks_from_logits(const torch::Tensor& logits);
MaskPair make_masks(Masker& masker, const torch::Tensor& features);

/// (M * F, (1 - M) * F), masks broadcast over channels.
std::pair<torch::Tensor, torch::Tensor> split(const torch::Tensor& features, const MaskPair& masks);

struct FusionOptions {
    std::vector<int64_t> level_channels;  // stride 8, 16, 32 ...
    int64_t projected_width = 64;
    int64_t out_channels = 64;  // C
    int64_t k_up = 5;
    int64_t k_enc = 3;
    int64_t compressed_channels = 64;
    /// Reach stride 8 from level i with i chained sigma=2 CARAFEs; otherwise
    /// one CARAFE with sigma = 2^i.
    bool chained = true;
};

/// Brings every level to the finest grid with CARAFE, projects each to a
/// shared width with a 1x1 conv, concatenates, and reduces with a 1x1 conv.
class ScaleFusionImpl : public torch::nn::Module {
public:
    explicit ScaleFusionImpl(const FusionOptions& options);
    torch::Tensor forward(const std::vector<torch::Tensor>& levels);

    const FusionOptions& options() const { return options_; }

    std::vector<std::vector<Carafe>> upsamplers;
    std::vector<torch::nn::Conv2d> projections;
    torch::nn::Conv2d reduce{nullptr};

private:
    FusionOptions options_;
};
TORCH_MODULE(ScaleFusion);

}  // namespace causalseg

#pragma once

#include <array>

#include <torch/torch.h>

namespace causalseg {

/// Dynamic convolution kernel generated from the text embedding:
/// weight [B, C, K, K], bias [B].
struct ProjectedKernel {
    torch::Tensor weight;
    torch::Tensor bias;
};

/// Positional split of projected text [B, C*K*K + 1] into (W, b).
ProjectedKernel split_kernel(const torch::Tensor& projected, int64_t channels, int64_t kernel_size);

/// Cross-correlates each sample's kernel with its own feature map
/// ([B, C, H, W], same padding, stride 1) and adds the bias everywhere.
/// Returns logits [B, 1, H, W].
torch::Tensor correlate(const ProjectedKernel& kernel, const torch::Tensor& features);

/// Bilinear resize (corners aligned) to `size`; refuses to shrink.
torch::Tensor bilinear_to(const torch::Tensor& features, std::array<int64_t, 2> size);

struct DecoderOptions {
    int64_t embed_dim = 128;  // T
    int64_t channels = 64;    // C
    int64_t kernel_size = 3;  // K
};

/// S = W_tau * up(F) + b_tau. `up` is bilinear interpolation to the image
/// grid followed by a learned 3x3 convolution.
class DynamicKernelDecoderImpl : public torch::nn::Module {
public:
    explicit DynamicKernelDecoderImpl(const DecoderOptions& options);

    ProjectedKernel project_text(const torch::Tensor& tau);
    torch::Tensor upsample_features(const torch::Tensor& fused, std::array<int64_t, 2> size);
    /// tau [B, T], fused [B, C, h, w] -> logits [B, 1, size].
    torch::Tensor forward(const torch::Tensor& tau, const torch::Tensor& fused, std::array<int64_t, 2> size);

    int64_t kernel_dim() const { return options_.channels * options_.kernel_size * options_.kernel_size + 1; }
    const DecoderOptions& options() const { return options_; }

    torch::nn::Linear text_proj{nullptr};
    torch::nn::Conv2d up_conv{nullptr};

private:
    DecoderOptions options_;
};
TORCH_MODULE(DynamicKernelDecoder);

}  // namespace causalseg

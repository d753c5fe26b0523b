#pragma once

#include <torch/torch.h>

namespace causalseg {

/// Per-output-location reassembly kernels, [B, k_up * k_up, sigma * h, sigma * w],
/// softmax-normalised along dim 1. Entry (dy + r) * k_up + (dx + r), r = k_up / 2,
/// weights source offset (dy, dx).
struct ReassemblyKernels {
    torch::Tensor weights;
    int64_t k_up = 1;
    int64_t sigma = 1;
};

/// Content-aware reassembly: output (i, j) is the k_up x k_up neighbourhood of
/// source (i / sigma, j / sigma), zero padded, weighted by that location's
/// kernel. Weights are shared across channels.
torch::Tensor reassemble(const torch::Tensor& features, const ReassemblyKernels& kernels);

struct CarafeOptions {
    int64_t channels = 0;
    int64_t sigma = 2;
    int64_t k_up = 5;
    int64_t k_enc = 3;
    int64_t compressed_channels = 64;
};

/// Kernel prediction branch (1x1 channel compressor, k_enc content encoder to
/// sigma^2 * k_up^2 channels, pixel shuffle, softmax) plus reassembly.
class CarafeImpl : public torch::nn::Module {
public:
    explicit CarafeImpl(const CarafeOptions& options);

    ReassemblyKernels predict_kernels(const torch::Tensor& features);
    torch::Tensor forward(const torch::Tensor& features);

    const CarafeOptions& options() const { return options_; }

    torch::nn::Conv2d compressor{nullptr};
    torch::nn::Conv2d encoder{nullptr};

private:
    CarafeOptions options_;
};
TORCH_MODULE(Carafe);

/// Softmax over the k_up^2 entries after pixel-shuffling encoder logits
/// [B, sigma^2 * k_up^2, h, w] onto the upscaled grid.
ReassemblyKernels normalize_kernels(const torch::Tensor& encoder_logits, int64_t k_up, int64_t sigma);

}  // namespace causalseg

#include "causalseg/carafe.hpp"

#include "causalseg/errors.hpp"

namespace causalseg {

namespace F = torch::nn::functional;

namespace {

void check_geometry(int64_t k_up, int64_t sigma) {
    if (k_up < 1 || k_up % 2 == 0) throw UserError("CARAFE k_up must be a positive odd integer");
    if (sigma < 1) throw UserError("CARAFE sigma must be >= 1");
}

}  // namespace

ReassemblyKernels normalize_kernels(const torch::Tensor& encoder_logits, int64_t k_up, int64_t sigma) {
    check_geometry(k_up, sigma);
    TORCH_CHECK(encoder_logits.dim() == 4 && encoder_logits.size(1) == sigma * sigma * k_up * k_up,
                "encoder logits must have sigma^2 * k_up^2 channels");
    auto shuffled = sigma > 1 ? F::pixel_shuffle(encoder_logits, F::PixelShuffleFuncOptions(sigma)) : encoder_logits;
    return {torch::softmax(shuffled, 1), k_up, sigma};
}

torch::Tensor reassemble(const torch::Tensor& features, const ReassemblyKernels& kernels) {
    check_geometry(kernels.k_up, kernels.sigma);
    TORCH_CHECK(features.dim() == 4, "features must be [B, C, h, w]");
    const int64_t batch = features.size(0), channels = features.size(1);
    const int64_t h = features.size(2), w = features.size(3);
    const int64_t k = kernels.k_up, s = kernels.sigma;
    const auto& wts = kernels.weights;
    if (wts.dim() != 4 || wts.size(0) != batch || wts.size(1) != k * k || wts.size(2) != h * s || wts.size(3) != w * s)
        throw UserError("reassembly kernels do not match the feature map and sigma");

    // [B, C * k^2, h * w] with channel-major, then row-major kernel offsets.
    auto patches = F::unfold(features, F::UnfoldFuncOptions({k, k}).padding(k / 2));
    patches = patches.view({batch, channels, k * k, h, w});
    if (s > 1) patches = patches.repeat_interleave(s, 3).repeat_interleave(s, 4);
    return (patches * wts.unsqueeze(1)).sum(2);
}

CarafeImpl::CarafeImpl(const CarafeOptions& options) : options_(options) {
    check_geometry(options.k_up, options.sigma);
    if (options.k_enc < 1 || options.k_enc % 2 == 0) throw UserError("CARAFE k_enc must be a positive odd integer");
    TORCH_CHECK(options.channels > 0 && options.compressed_channels > 0, "CARAFE channel counts must be positive");
    compressor = register_module("compressor",
                                 torch::nn::Conv2d(torch::nn::Conv2dOptions(options.channels, options.compressed_channels, 1)));
    const int64_t out = options.sigma * options.sigma * options.k_up * options.k_up;
    encoder = register_module("encoder", torch::nn::Conv2d(torch::nn::Conv2dOptions(options.compressed_channels, out,
                                                                                      options.k_enc)
                                                               .padding(options.k_enc / 2)));
}

ReassemblyKernels CarafeImpl::predict_kernels(const torch::Tensor& features) {
    return normalize_kernels(encoder(compressor(features)), options_.k_up, options_.sigma);
}

torch::Tensor CarafeImpl::forward(const torch::Tensor& features) { return reassemble(features, predict_kernels(features)); }

}  // namespace causalseg

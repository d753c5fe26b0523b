#include "causalseg/decoder.hpp"

#include "causalseg/errors.hpp"

namespace causalseg {

namespace F = torch::nn::functional;

ProjectedKernel split_kernel(const torch::Tensor& projected, int64_t channels, int64_t kernel_size) {
    const int64_t d = channels * kernel_size * kernel_size + 1;
    if (projected.dim() != 2 || projected.size(1) != d)
        throw UserError("projected text width " + std::to_string(projected.dim() == 2 ? projected.size(1) : -1) +
                        " does not equal C*K*K+1 = " + std::to_string(d));
    const int64_t batch = projected.size(0);
    return {projected.narrow(1, 0, d - 1).reshape({batch, channels, kernel_size, kernel_size}),
            projected.select(1, d - 1)};
}

torch::Tensor correlate(const ProjectedKernel& kernel, const torch::Tensor& features) {
    TORCH_CHECK(features.dim() == 4, "features must be [B, C, H, W]");
    const int64_t batch = features.size(0), channels = features.size(1);
    const auto& w = kernel.weight;
    if (w.dim() != 4 || w.size(0) != batch || w.size(1) != channels)
        throw UserError("kernel channels do not match feature channels");
    const int64_t k = w.size(2);
    if (k % 2 == 0 || w.size(3) != k) throw UserError("kernel must be square with odd size");

    // One group per sample: [1, B*C, H, W] convolved with B kernels of C channels.
    auto grouped = features.reshape({1, batch * channels, features.size(2), features.size(3)});
    auto out = F::conv2d(grouped, w, F::Conv2dFuncOptions().padding(k / 2).groups(batch).bias(kernel.bias));
    return out.transpose(0, 1);
}

torch::Tensor bilinear_to(const torch::Tensor& features, std::array<int64_t, 2> size) {
    TORCH_CHECK(features.dim() == 4, "features must be [B, C, h, w]");
    if (features.size(2) > size[0] || features.size(3) > size[1])
        throw UserError("upsampling target is smaller than the source feature map");
    if (features.size(2) == size[0] && features.size(3) == size[1]) return features;
    return F::interpolate(features, F::InterpolateFuncOptions()
                                        .size(std::vector<int64_t>{size[0], size[1]})
                                        .mode(torch::kBilinear)
                                        .align_corners(true));
}

DynamicKernelDecoderImpl::DynamicKernelDecoderImpl(const DecoderOptions& options) : options_(options) {
    if (options.kernel_size < 1 || options.kernel_size % 2 == 0) throw UserError("decoder kernel size must be odd");
    text_proj = register_module("text_proj", torch::nn::Linear(options.embed_dim, kernel_dim()));
    up_conv = register_module("up_conv",
                              torch::nn::Conv2d(torch::nn::Conv2dOptions(options.channels, options.channels, 3).padding(1)));
}

ProjectedKernel DynamicKernelDecoderImpl::project_text(const torch::Tensor& tau) {
    return split_kernel(text_proj(tau), options_.channels, options_.kernel_size);
}

torch::Tensor DynamicKernelDecoderImpl::upsample_features(const torch::Tensor& fused, std::array<int64_t, 2> size) {
    return up_conv(bilinear_to(fused, size));
}

torch::Tensor DynamicKernelDecoderImpl::forward(const torch::Tensor& tau, const torch::Tensor& fused,
                                                std::array<int64_t, 2> size) {
    return correlate(project_text(tau), upsample_features(fused, size));
}

}  // namespace causalseg

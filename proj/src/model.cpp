#include "causalseg/model.hpp"

#include <torch/script.h>

#include "causalseg/errors.hpp"

namespace causalseg {

CausalSegModelImpl::CausalSegModelImpl(const RunConfig& config, int64_t vocab_size, int64_t eos_id)
    : config_(config) {
    TextEncoderOptions to;
    to.vocab_size = vocab_size;
    to.context = config.text_context;
    to.width = config.text_width;
    to.layers = config.text_layers;
    to.heads = config.text_heads;
    to.embed_dim = config.embed_dim;
    to.eos_id = eos_id;
    text = register_module("text", TextEncoder(to));

    const auto backbone = config.scale == ModelScale::Full ? BackboneOptions::rn101() : BackboneOptions::tiny();
    vision = register_module("vision", VisionEncoder(backbone));
    const auto widths = backbone.pyramid_channels();

    FusionOptions fo;
    fo.level_channels.assign(widths.begin(), widths.end());
    fo.projected_width = config.fuse_width;
    fo.out_channels = config.decoder_channels;
    fo.k_up = config.carafe_k_up;
    fo.k_enc = config.carafe_k_enc;
    fo.compressed_channels = config.carafe_compressed;
    fo.chained = config.carafe_chained;

    const DecoderOptions dopt{config.embed_dim, config.decoder_channels, config.kernel_size};
    fuse_causal = register_module("fuse_c", ScaleFusion(fo));
    decoder_causal = register_module("decoder_c", DynamicKernelDecoder(dopt));
    if (config.causal_intervention) {
        for (size_t i = 0; i < widths.size(); ++i)
            maskers.push_back(register_module("masker" + std::to_string(i + 2), Masker(widths[i], config.masker_channels)));
        fuse_confounding = register_module("fuse_s", ScaleFusion(fo));
        decoder_confounding = register_module("decoder_s", DynamicKernelDecoder(dopt));
    }
}

ModelOutput CausalSegModelImpl::forward(const torch::Tensor& images, const torch::Tensor& token_ids,
                                        const torch::Tensor& lengths) {
    if (images.dim() != 4 || images.size(1) != 1 || images.size(2) != config_.image_size ||
        images.size(3) != config_.image_size)
        throw UserError("image batch must be [B, 1, " + std::to_string(config_.image_size) + ", " +
                        std::to_string(config_.image_size) + "]");
    const std::array<int64_t, 2> full{images.size(2), images.size(3)};

    ModelOutput out;
    out.tau = text->forward(token_ids, lengths);
    auto pyramid = vision->forward(images);

    if (!config_.causal_intervention) {
        out.logits_causal = decoder_causal->forward(out.tau, fuse_causal->forward(pyramid.levels), full);
        return out;
    }

    SplitFeatures streams;
    for (size_t i = 0; i < pyramid.levels.size(); ++i) {
        auto masks = make_masks(maskers[i], pyramid.levels[i]);
        auto [causal, confounding] = split(pyramid.levels[i], masks);
        streams.causal.push_back(causal);
        streams.confounding.push_back(confounding);
        out.masks.push_back(std::move(masks));
    }
    out.logits_causal = decoder_causal->forward(out.tau, fuse_causal->forward(streams.causal), full);
    out.logits_confounding =
        decoder_confounding->forward(out.tau, fuse_confounding->forward(streams.confounding), full);
    return out;
}

std::vector<torch::Tensor> CausalSegModelImpl::confounding_decoder_parameters() const {
    if (!decoder_confounding) return {};
    auto params = fuse_confounding->parameters();
    for (auto& p : decoder_confounding->parameters()) params.push_back(p);
    return params;
}

void CausalSegModelImpl::set_encoders_trainable(bool trainable) {
    for (auto& p : text->parameters()) p.set_requires_grad(trainable);
    for (auto& p : vision->parameters()) p.set_requires_grad(trainable);
}

std::string map_clip_key(const std::string& key) {
    auto starts = [&](const std::string& prefix) { return key.rfind(prefix, 0) == 0; };
    if (starts("visual.attnpool.")) return {};
    if (starts("visual.")) return "vision." + key.substr(7);
    if (starts("transformer.resblocks.")) return "text." + key.substr(12);
    for (const char* k : {"token_embedding.", "ln_final."})
        if (starts(k)) return "text." + key;
    if (key == "positional_embedding" || key == "text_projection") return "text." + key;
    return {};
}

WeightLoadReport load_clip_weights(CausalSegModel& model, const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw UserError("CLIP weight file not found: " + path.string());
    torch::jit::Module archive;
    try {
        archive = torch::jit::load(path.string(), torch::kCPU);
    } catch (const c10::Error& e) {
        throw UserError("cannot read CLIP weights " + path.string() + ": " + e.what_without_backtrace());
    }

    auto params = model->named_parameters(true);
    auto buffers = model->named_buffers(true);
    WeightLoadReport report;
    torch::NoGradGuard no_grad;

    auto assign = [&](const std::string& src_key, torch::Tensor value) {
        const std::string dst_key = map_clip_key(src_key);
        torch::Tensor* dst = params.find(dst_key);
        if (!dst) dst = buffers.find(dst_key);
        if (dst_key.empty() || !dst) {
            report.skipped.push_back(src_key);
            return;
        }
        if (dst_key == "vision.conv1.weight" && value.dim() == 4 && value.size(1) == 3 && dst->size(1) == 1)
            value = adapt_input_channels(value);
        if (dst_key == "text.positional_embedding" && value.dim() == 2 && value.size(0) > dst->size(0))
            value = value.narrow(0, 0, dst->size(0));
        if (value.sizes() != dst->sizes()) {
            std::ostringstream msg;
            msg << "shape mismatch for " << src_key << ": checkpoint " << value.sizes() << " vs model " << dst->sizes();
            throw UserError(msg.str());
        }
        dst->copy_(value.to(dst->dtype()));
        report.loaded.push_back(dst_key);
    };
    for (const auto& p : archive.named_parameters(true)) assign(p.name, p.value);
    for (const auto& b : archive.named_buffers(true)) assign(b.name, b.value);
    return report;
}

}  // namespace causalseg

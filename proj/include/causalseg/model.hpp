#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "causalseg/config.hpp"
#include "causalseg/decoder.hpp"
#include "causalseg/intervention.hpp"
#include "causalseg/text_encoder.hpp"
#include "causalseg/vision_encoder.hpp"

namespace causalseg {

struct ModelOutput {
    torch::Tensor logits_causal;       // D_c response, [B, 1, H, W]
    torch::Tensor logits_confounding;  // D_s response; undefined without the intervention module
    torch::Tensor tau;                 // [B, T]
    std::vector<MaskPair> masks;       // one pair per pyramid level; empty without the intervention module
};

/// Text encoder + vision encoder + causal intervention (per-level maskers,
/// separate causal/confounding fusion) + two identical dynamic-kernel
/// decoders. With causal_intervention off the maskers and D_s are absent and
/// D_c decodes the fused raw pyramid.
class CausalSegModelImpl : public torch::nn::Module {
public:
    CausalSegModelImpl(const RunConfig& config, int64_t vocab_size, int64_t eos_id);

    ModelOutput forward(const torch::Tensor& images, const torch::Tensor& token_ids, const torch::Tensor& lengths);

    bool has_intervention() const { return config_.causal_intervention; }
    const RunConfig& config() const { return config_; }

    /// Parameters that only influence the confounding decoder's output.
    std::vector<torch::Tensor> confounding_decoder_parameters() const;
    void set_encoders_trainable(bool trainable);

    TextEncoder text{nullptr};
    VisionEncoder vision{nullptr};
    std::vector<Masker> maskers;
    ScaleFusion fuse_causal{nullptr};
    ScaleFusion fuse_confounding{nullptr};
    DynamicKernelDecoder decoder_causal{nullptr};
    DynamicKernelDecoder decoder_confounding{nullptr};

private:
    RunConfig config_;
};
TORCH_MODULE(CausalSegModel);

struct WeightLoadReport {
    std::vector<std::string> loaded;
    std::vector<std::string> skipped;
};

/// Source key -> model key for a CLIP checkpoint: "visual.*" -> "vision.*"
/// (attnpool dropped), "transformer.resblocks.*" -> "text.resblocks.*",
/// token_embedding/positional_embedding/ln_final/text_projection -> "text.*".
/// Returns an empty string for keys that have no counterpart.
std::string map_clip_key(const std::string& clip_key);

/// Loads a TorchScript CLIP archive (the format CLIP releases ship in). The
/// RGB stem is collapsed with adapt_input_channels and the positional table
/// is truncated to the model's context. Shape mismatches are errors.
WeightLoadReport load_clip_weights(CausalSegModel& model, const std::filesystem::path& path);

}  // namespace causalseg

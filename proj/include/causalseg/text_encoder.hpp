#pragma once

#include <torch/torch.h>

#include "causalseg/tokenizer.hpp"

namespace causalseg {

struct TextEncoderOptions {
    int64_t vocab_size = 0;
    int64_t context = 20;   // positional table rows
    int64_t width = 128;
    int64_t layers = 2;
    int64_t heads = 2;
    int64_t embed_dim = 128;  // T
    int64_t eos_id = -1;      // checked at lengths - 1 when >= 0
};

/// Pre-norm residual attention block with CLIP's parameter layout
/// (attn.in_proj_weight, ln_1, mlp.c_fc, mlp.c_proj, ln_2).
class ResidualAttentionBlockImpl : public torch::nn::Module {
public:
    ResidualAttentionBlockImpl(int64_t width, int64_t heads);

    /// x: [L, B, width]; attn_mask: additive [B * heads, L, L].
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& attn_mask);

private:
    torch::nn::MultiheadAttention attn{nullptr};
    torch::nn::LayerNorm ln_1{nullptr}, ln_2{nullptr};
    torch::nn::Sequential mlp{nullptr};
    int64_t heads_;
};
TORCH_MODULE(ResidualAttentionBlock);

/// Causal Transformer over the token sequence; the final-layer activation at
/// the EOS position, layer-normed and projected, is the global text embedding.
class TextEncoderImpl : public torch::nn::Module {
public:
    explicit TextEncoderImpl(const TextEncoderOptions& options);

    /// token_ids: [B, L] int64, lengths: [B] int64 with EOS at lengths - 1.
    /// Returns tau: [B, T].
    torch::Tensor forward(const torch::Tensor& token_ids, const torch::Tensor& lengths);

    const TextEncoderOptions& options() const { return options_; }

    torch::nn::Embedding token_embedding{nullptr};
    torch::Tensor positional_embedding;
    torch::nn::ModuleList resblocks{nullptr};
    torch::nn::LayerNorm ln_final{nullptr};
    torch::Tensor text_projection;  // [width, T]

private:
    TextEncoderOptions options_;
};
TORCH_MODULE(TextEncoder);

/// Packs queries into ([B, L] ids, [B] lengths). Fails if a query's EOS is
/// missing from its last non-padding slot.
std::pair<torch::Tensor, torch::Tensor> stack_queries(const std::vector<TextQuery>& queries, int64_t eos_id);

}  // namespace causalseg

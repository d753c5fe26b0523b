#include "causalseg/text_encoder.hpp"

#include <cmath>
#include <limits>

#include "causalseg/errors.hpp"

namespace causalseg {

ResidualAttentionBlockImpl::ResidualAttentionBlockImpl(int64_t width, int64_t heads) : heads_(heads) {
    attn = register_module("attn", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(width, heads)));
    ln_1 = register_module("ln_1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
    mlp = register_module(
        "mlp", torch::nn::Sequential({
                   {"c_fc", torch::nn::Linear(width, width * 4)},
                   {"gelu", torch::nn::Functional([](const torch::Tensor& x) { return x * torch::sigmoid(1.702 * x); })},
                   {"c_proj", torch::nn::Linear(width * 4, width)},
               }));
    ln_2 = register_module("ln_2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
}

torch::Tensor ResidualAttentionBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& attn_mask) {
    const int64_t len = x.size(0), batch = x.size(1), width = x.size(2), head_dim = width / heads_;
    auto qkv = torch::nn::functional::linear(ln_1(x), attn->in_proj_weight, attn->in_proj_bias).chunk(3, -1);
    auto heads = [&](const torch::Tensor& t) {
        return t.contiguous().view({len, batch * heads_, head_dim}).transpose(0, 1);  // [B * heads, L, d]
    };
    auto q = heads(qkv[0]) * std::pow(static_cast<double>(head_dim), -0.5);
    auto scores = torch::baddbmm(attn_mask, q, heads(qkv[1]).transpose(1, 2));
    auto context = torch::bmm(torch::softmax(scores, -1), heads(qkv[2]));
    auto attended = attn->out_proj(context.transpose(0, 1).contiguous().view({len, batch, width}));
    auto y = x + attended;
    return y + mlp->forward(ln_2(y));
}

TextEncoderImpl::TextEncoderImpl(const TextEncoderOptions& options) : options_(options) {
    TORCH_CHECK(options.vocab_size > 0, "text encoder needs a positive vocabulary size");
    token_embedding = register_module("token_embedding", torch::nn::Embedding(options.vocab_size, options.width));
    positional_embedding = register_parameter("positional_embedding", torch::empty({options.context, options.width}));
    resblocks = register_module("resblocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < options.layers; ++i) resblocks->push_back(ResidualAttentionBlock(options.width, options.heads));
    ln_final = register_module("ln_final", torch::nn::LayerNorm(torch::nn::LayerNormOptions({options.width})));
    text_projection = register_parameter("text_projection", torch::empty({options.width, options.embed_dim}));

    torch::NoGradGuard no_grad;
    torch::nn::init::normal_(token_embedding->weight, 0.0, 0.02);
    torch::nn::init::normal_(positional_embedding, 0.0, 0.01);
    torch::nn::init::normal_(text_projection, 0.0, std::pow(static_cast<double>(options.width), -0.5));
}

torch::Tensor TextEncoderImpl::forward(const torch::Tensor& token_ids, const torch::Tensor& lengths) {
    TORCH_CHECK(token_ids.dim() == 2, "token_ids must be [B, L]");
    TORCH_CHECK(lengths.dim() == 1 && lengths.size(0) == token_ids.size(0), "lengths must be [B]");
    const int64_t batch = token_ids.size(0);
    const auto eos_index = (lengths - 1).to(torch::kLong);
    if (lengths.min().item<int64_t>() < 2 || lengths.max().item<int64_t>() > token_ids.size(1))
        throw UserError("token sequence lengths out of range");
    if (options_.eos_id >= 0) {
        auto at_eos = token_ids.gather(1, eos_index.unsqueeze(1)).squeeze(1);
        if (!at_eos.eq(options_.eos_id).all().item<bool>()) throw UserError("EOS token absent from text sequence");
    }

    // Positions past the longest sequence are padding for every row and can
    // never be attended to under the causal mask, so they are dropped.
    const int64_t len = lengths.max().item<int64_t>();
    if (len > options_.context) throw UserError("text sequence longer than the positional table");
    auto ids = token_ids.narrow(1, 0, len);

    auto x = token_embedding(ids) + positional_embedding.narrow(0, 0, len);
    x = x.transpose(0, 1);  // [L, B, width]

    const auto opts = x.options();
    const float neg_inf = -std::numeric_limits<float>::infinity();
    auto causal = torch::full({len, len}, neg_inf, opts).triu(1);
    auto positions = torch::arange(len, lengths.options());
    auto padded = positions.unsqueeze(0).ge(lengths.unsqueeze(1));  // [B, L]
    auto key_mask = torch::zeros({batch, 1, len}, opts).masked_fill(padded.unsqueeze(1), neg_inf);
    auto mask = (causal.unsqueeze(0) + key_mask)
                    .unsqueeze(1)
                    .expand({batch, options_.heads, len, len})
                    .reshape({batch * options_.heads, len, len});

    for (const auto& block : *resblocks) x = block->as<ResidualAttentionBlock>()->forward(x, mask);

    x = ln_final(x.transpose(0, 1));  // [B, L, width]
    auto at_eos = x.index({torch::arange(batch, lengths.options()), eos_index});
    return at_eos.matmul(text_projection);
}

std::pair<torch::Tensor, torch::Tensor> stack_queries(const std::vector<TextQuery>& queries, int64_t eos_id) {
    if (queries.empty()) throw UserError("no text queries to stack");
    const auto width = static_cast<int64_t>(queries.front().token_ids.size());
    auto ids = torch::empty({static_cast<int64_t>(queries.size()), width}, torch::kLong);
    auto lengths = torch::empty({static_cast<int64_t>(queries.size())}, torch::kLong);
    auto ids_a = ids.accessor<int64_t, 2>();
    for (size_t b = 0; b < queries.size(); ++b) {
        const auto& q = queries[b];
        if (static_cast<int64_t>(q.token_ids.size()) != width) throw UserError("text queries have unequal padded lengths");
        if (q.length < 2 || q.length > width || q.token_ids[static_cast<size_t>(q.length - 1)] != eos_id)
            throw UserError("EOS token absent from text query '" + q.raw + "'");
        for (int64_t t = 0; t < width; ++t) ids_a[static_cast<int64_t>(b)][t] = q.token_ids[static_cast<size_t>(t)];
        lengths[static_cast<int64_t>(b)] = q.length;
    }
    return {ids, lengths};
}

}  // namespace causalseg

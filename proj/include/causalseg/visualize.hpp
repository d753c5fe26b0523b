#pragma once

#include <optional>
#include <string>

#include <torch/torch.h>

#include "causalseg/image_io.hpp"
#include "causalseg/training.hpp"

namespace causalseg {

struct Prediction {
    torch::Tensor logits;      // [S, S] D_c response
    torch::Tensor foreground;  // [S, S] bool, logits > 0
    torch::Tensor causal_mask; // stride-8 M of the first pyramid level; undefined without intervention
};

/// Runs one image/expression pair through the model in eval mode.
Prediction predict(Segmenter& seg, const Image8& image, const std::string& text);

/// Binary prediction as a 0/255 image.
Image8 prediction_image(const Prediction& p);

/// Side-by-side tiles at the model resolution: input, ground truth (dark when
/// absent), input with predicted foreground painted pure red, and the causal
/// mask heatmap (blue = 0, red = 1).
Image8 render_panel(const Segmenter& seg, const Image8& image, const Prediction& p, const std::optional<Image8>& gt);

/// Jet-style colormap for v in [0, 1].
std::array<uint8_t, 3> heat_color(double v);

}  // namespace causalseg

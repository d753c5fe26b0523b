#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace causalseg {

enum class ModelScale { Tiny, Full };

std::string to_string(ModelScale scale);
ModelScale parse_scale(const std::string& name);

/// Every knob of a run. A RunConfig obtained from resolve_config() is fully
/// materialized: scale-dependent fields have been filled from the preset.
struct RunConfig {
    ModelScale scale = ModelScale::Tiny;

    // input
    int64_t image_size = 224;
    int64_t max_text_len = 20;
    double pixel_mean = 0.44916430;
    double pixel_std = 0.26856974;

    // text encoder
    int64_t vocab_size = 49152;  // nominal BPE vocabulary; merges = vocab_size - 258
    int64_t text_width = 128;
    int64_t text_layers = 2;
    int64_t text_heads = 2;
    int64_t text_context = 20;   // rows in the positional table (77 for CLIP)
    int64_t embed_dim = 128;     // T

    // decoder / fusion
    int64_t decoder_channels = 64;  // C
    int64_t kernel_size = 3;        // K
    int64_t fuse_width = 64;
    int64_t masker_channels = 32;
    int64_t carafe_k_up = 5;
    int64_t carafe_k_enc = 3;
    int64_t carafe_compressed = 64;
    bool carafe_chained = true;
    bool causal_intervention = true;

    // optimisation
    double lr = 3e-5;
    double lambda = 0.05;
    int64_t max_epochs = 2000;
    int64_t patience = 100;
    int64_t batch_size = 4;
    uint64_t seed = 0;
    bool deterministic = true;
    bool freeze_encoders = false;
    bool augment_flip = false;
    bool augment_rotate = false;

    // evaluation
    std::string miou_mode = "two_class";  // two_class | foreground

    // paths
    std::string dataset_root;
    std::string clip_weights;
    std::string bpe_merges;
    std::string out_dir = "runs/default";

    // dataset table columns
    std::string image_column = "image_name";
    std::string text_column = "description";
    std::string split_column = "split";

    bool operator==(const RunConfig&) const = default;
};

/// Scale preset with every field at its default for that scale.
RunConfig preset(ModelScale scale);

nlohmann::json to_json(const RunConfig& config);

/// Starts from the preset named by overrides["scale"] (tiny when absent) and
/// applies every key present. Unknown keys are rejected.
RunConfig resolve_config(const nlohmann::json& overrides);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// Stable hash over the fields that determine parameter shapes.
std::string architecture_hash(const RunConfig& config);

}  // namespace causalseg

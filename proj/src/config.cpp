#include "causalseg/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "causalseg/errors.hpp"

namespace causalseg {

namespace {

#define CAUSALSEG_CONFIG_FIELDS(X) \
    X(image_size)                  \
    X(max_text_len)                \
    X(pixel_mean)                  \
    X(pixel_std)                   \
    X(vocab_size)                  \
    X(text_width)                  \
    X(text_layers)                 \
    X(text_heads)                  \
    X(text_context)                \
    X(embed_dim)                   \
    X(decoder_channels)            \
    X(kernel_size)                 \
    X(fuse_width)                  \
    X(masker_channels)             \
    X(carafe_k_up)                 \
    X(carafe_k_enc)                \
    X(carafe_compressed)           \
    X(carafe_chained)              \
    X(causal_intervention)         \
    X(lr)                          \
    X(lambda)                      \
    X(max_epochs)                  \
    X(patience)                    \
    X(batch_size)                  \
    X(seed)                        \
    X(deterministic)               \
    X(freeze_encoders)             \
    X(augment_flip)                \
    X(augment_rotate)              \
    X(miou_mode)                   \
    X(dataset_root)                \
    X(clip_weights)                \
    X(bpe_merges)                  \
    X(out_dir)                     \
    X(image_column)                \
    X(text_column)                 \
    X(split_column)

void validate(const RunConfig& c) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw UserError("invalid config: " + what);
    };
    require(c.image_size > 0 && c.image_size % 32 == 0, "image_size must be a positive multiple of 32");
    require(c.max_text_len >= 2, "max_text_len must be >= 2");
    require(c.max_text_len <= c.text_context, "max_text_len exceeds text_context");
    require(c.pixel_std > 0, "pixel_std must be positive");
    require(c.vocab_size > 258, "vocab_size must exceed 258");
    require(c.text_width > 0 && c.text_heads > 0 && c.text_width % c.text_heads == 0,
            "text_width must be divisible by text_heads");
    require(c.text_layers >= 0 && c.embed_dim > 0, "text_layers/embed_dim");
    require(c.decoder_channels > 0 && c.fuse_width > 0 && c.masker_channels > 0, "channel widths");
    require(c.kernel_size > 0 && c.kernel_size % 2 == 1, "kernel_size must be odd");
    require(c.carafe_k_up > 0 && c.carafe_k_up % 2 == 1, "carafe_k_up must be odd");
    require(c.carafe_k_enc > 0 && c.carafe_k_enc % 2 == 1, "carafe_k_enc must be odd");
    require(c.carafe_compressed > 0, "carafe_compressed");
    require(c.lr > 0 && c.lambda >= 0, "lr must be positive and lambda non-negative");
    require(c.max_epochs > 0 && c.patience > 0 && c.batch_size > 0, "epochs/patience/batch_size");
    require(c.miou_mode == "two_class" || c.miou_mode == "foreground",
            "miou_mode must be two_class or foreground");
}

}  // namespace

std::string to_string(ModelScale scale) { return scale == ModelScale::Tiny ? "tiny" : "full"; }

ModelScale parse_scale(const std::string& name) {
    if (name == "tiny") return ModelScale::Tiny;
    if (name == "full") return ModelScale::Full;
    throw UserError("unknown model scale '" + name + "' (expected tiny or full)");
}

RunConfig preset(ModelScale scale) {
    RunConfig c;
    c.scale = scale;
    if (scale == ModelScale::Full) {
        // CLIP RN101 text tower and embedding width.
        c.text_width = 512;
        c.text_layers = 12;
        c.text_heads = 8;
        c.text_context = 77;
        c.embed_dim = 512;
        c.decoder_channels = 512;
        c.fuse_width = 256;
        c.masker_channels = 256;
        c.batch_size = 32;
    }
    return c;
}

nlohmann::json to_json(const RunConfig& config) {
    nlohmann::json j;
    j["scale"] = to_string(config.scale);
#define X(name) j[#name] = config.name;
    CAUSALSEG_CONFIG_FIELDS(X)
#undef X
    return j;
}

RunConfig resolve_config(const nlohmann::json& overrides) {
    if (!overrides.is_null() && !overrides.is_object())
        throw UserError("config must be a flat JSON object");
    ModelScale scale = ModelScale::Tiny;
    if (overrides.contains("scale")) scale = parse_scale(overrides.at("scale").get<std::string>());
    RunConfig c = preset(scale);
    if (overrides.is_null()) return c;

    for (const auto& [key, value] : overrides.items()) {
        if (key == "scale") continue;
        bool known = false;
        try {
#define X(name)                              \
    if (key == #name) {                      \
        value.get_to(c.name);                \
        known = true;                        \
    }
            CAUSALSEG_CONFIG_FIELDS(X)
#undef X
        } catch (const nlohmann::json::exception& e) {
            throw UserError("config key '" + key + "': " + e.what());
        }
        if (!known) throw UserError("unknown config key '" + key + "'");
    }
    validate(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UserError("cannot parse config file " + path.string() + ": " + e.what());
    }
    return resolve_config(j);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file " + path.string());
    out << std::setw(2) << to_json(config) << "\n";
}

std::string architecture_hash(const RunConfig& config) {
    nlohmann::json j;
    j["scale"] = to_string(config.scale);
    j["image_size"] = config.image_size;
    j["max_text_len"] = config.max_text_len;
    j["vocab_size"] = config.vocab_size;
    j["text_width"] = config.text_width;
    j["text_layers"] = config.text_layers;
    j["text_heads"] = config.text_heads;
    j["text_context"] = config.text_context;
    j["embed_dim"] = config.embed_dim;
    j["decoder_channels"] = config.decoder_channels;
    j["kernel_size"] = config.kernel_size;
    j["fuse_width"] = config.fuse_width;
    j["masker_channels"] = config.masker_channels;
    j["carafe_k_up"] = config.carafe_k_up;
    j["carafe_k_enc"] = config.carafe_k_enc;
    j["carafe_compressed"] = config.carafe_compressed;
    j["carafe_chained"] = config.carafe_chained;
    j["causal_intervention"] = config.causal_intervention;

    // FNV-1a, 64 bit
    uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace causalseg

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "causalseg/config.hpp"
#include "causalseg/image_io.hpp"
#include "causalseg/tokenizer.hpp"

namespace causalseg {

enum class Split { Train, Val, Test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct DatasetRecord {
    std::string name;
    std::filesystem::path image_path;
    std::filesystem::path mask_path;
    std::string text;
    Split split = Split::Train;
};

struct DatasetSplits {
    std::vector<DatasetRecord> train, val, test;
    const std::vector<DatasetRecord>& get(Split split) const;
};

/// Published QaTa-COV19 split sizes (train, val, test) and their total.
inline constexpr std::array<size_t, 3> kQataSplitSizes{5716, 1429, 2113};
inline constexpr size_t kQataTotal = 9258;

struct TableColumns {
    std::string image = "image_name";
    std::string text = "description";
    std::string split = "split";  // rows without this column go to train
};

/// Reads <root>/texts.csv and pairs each row with images/<name> and
/// masks/<name>. When the table holds the full 9,258 images the split sizes
/// must equal the published ones.
DatasetSplits load_qata(const std::filesystem::path& root, const TableColumns& columns = {});

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_escape(const std::string& field);

/// One image/mask/expression triple at native resolution. Masks hold 0 or 1.
struct Example {
    std::string name;
    Image8 image;
    Image8 mask;
    std::string text;
};

/// Loads a record's files. Mask pixels must be 0, 1 or 255; anything else is
/// an error naming the file.
Example load_example(const DatasetRecord& record);

/// Lesion shapes rendered by the synthetic generator. Coordinates are pixel
/// centres; a pixel belongs to a shape iff its centre satisfies the shape's
/// inequality.
struct Shape {
    enum class Kind { Disc, Bar, Blob };
    Kind kind = Kind::Disc;
    double cx = 0, cy = 0;
    double a = 0;      // disc radius, bar half-width, blob semi-axis
    double b = 0;      // bar half-height, blob second semi-axis
    double angle = 0;  // blob rotation
    bool contains(double x, double y) const;
    double bounding_radius() const;
};

struct SyntheticSpec {
    int64_t n_train = 500;
    int64_t n_val = 100;
    int64_t n_test = 100;
    int64_t image_size = 64;
    int64_t min_shapes = 1;
    int64_t max_shapes = 4;
    /// Train split only: probability that a quadrant's texture flag copies its
    /// lesion flag instead of being drawn independently.
    double confound_strength = 0.0;
    double texture_rate = 0.5;
    double lesion_contrast = 0.3;
    double noise_std = 0.06;
    double texture_amplitude = 0.15;
    uint64_t seed = 0;
};

struct SyntheticSample {
    Example example;
    Split split = Split::Train;
    std::vector<Shape> shapes;
    std::array<bool, 4> quadrant_lesion{};   // upper left, upper right, lower left, lower right
    std::array<bool, 4> quadrant_texture{};
};

struct SyntheticDataset {
    std::vector<SyntheticSample> train, val, test;
    const std::vector<SyntheticSample>& get(Split split) const;
};

/// Deterministic: the same SyntheticSpec yields bitwise-identical data.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// "two lesion areas, upper left and lower right region"
std::string describe_lesions(const std::vector<Shape>& shapes, int64_t image_size);
int quadrant_of(double cx, double cy, int64_t image_size);

/// Writes images/*.png, masks/*.png (0/255) and texts.csv under `root`.
void write_dataset(const SyntheticDataset& data, const std::filesystem::path& root);

/// 4-connected components of a binary mask.
int64_t count_components(const Image8& mask);

/// Images normalised to [N, 1, S, S], masks {0, 1} float [N, 1, S, S],
/// token ids [N, max_text_len], lengths [N].
struct SegmentationSet {
    torch::Tensor images;
    torch::Tensor masks;
    torch::Tensor tokens;
    torch::Tensor lengths;
    std::vector<std::string> names;
    std::vector<std::string> texts;

    int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

/// Bilinear resize for images, nearest for masks.
torch::Tensor image_to_tensor(const Image8& image, const RunConfig& config);
torch::Tensor mask_to_tensor(const Image8& mask, int64_t image_size);

/// Horizontal mirror with left/right swapped in the text.
Example mirrored(const Example& ex);
/// 180 degree rotation with left/right and upper/lower swapped in the text.
Example rotated180(const Example& ex);

/// When augment=true, the config's flip/rotate flags append transformed copies.
SegmentationSet make_set(const std::vector<Example>& examples, const Tokenizer& tokenizer, const RunConfig& config,
                         bool augment = false);
std::vector<Example> examples_of(const std::vector<SyntheticSample>& samples);
std::vector<Example> load_examples(const std::vector<DatasetRecord>& records);

}  // namespace causalseg

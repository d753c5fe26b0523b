#include "causalseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

#include "causalseg/errors.hpp"

namespace causalseg {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "train" || s == "training") return Split::Train;
    if (s == "val" || s == "valid" || s == "validation") return Split::Val;
    if (s == "test" || s == "testing") return Split::Test;
    throw UserError("unknown split '" + name + "'");
}

const std::vector<DatasetRecord>& DatasetSplits::get(Split split) const {
    return split == Split::Train ? train : split == Split::Val ? val : test;
}

const std::vector<SyntheticSample>& SyntheticDataset::get(Split split) const {
    return split == Split::Train ? train : split == Split::Val ? val : test;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw UserError("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// ---------------------------------------------------------------------------
// QaTa-format loading

DatasetSplits load_qata(const fs::path& root, const TableColumns& columns) {
    if (!fs::is_directory(root)) throw UserError("dataset root does not exist: " + root.string());
    const fs::path table = root / "texts.csv";
    std::ifstream in(table, std::ios::binary);
    if (!in) throw UserError("missing text table " + table.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto rows = parse_csv(ss.str());
    if (rows.empty()) throw UserError("empty text table " + table.string());

    const auto& header = rows.front();
    auto column = [&](const std::string& name) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    const auto image_col = column(columns.image), text_col = column(columns.text), split_col = column(columns.split);
    if (image_col < 0 || text_col < 0)
        throw UserError(table.string() + " needs columns '" + columns.image + "' and '" + columns.text + "'");

    DatasetSplits splits;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto cell = [&](std::ptrdiff_t c) -> std::string {
            if (c >= static_cast<std::ptrdiff_t>(row.size()))
                throw UserError(table.string() + " row " + std::to_string(r + 1) + " has too few fields");
            return row[static_cast<size_t>(c)];
        };
        DatasetRecord rec;
        rec.name = cell(image_col);
        rec.text = cell(text_col);
        rec.split = split_col >= 0 ? parse_split(cell(split_col)) : Split::Train;
        rec.image_path = root / "images" / rec.name;
        if (!fs::exists(rec.image_path)) throw UserError("text row without image: " + rec.image_path.string());
        rec.mask_path = root / "masks" / rec.name;
        if (!fs::exists(rec.mask_path) && fs::exists(root / "masks" / ("mask_" + rec.name)))
            rec.mask_path = root / "masks" / ("mask_" + rec.name);
        if (!fs::exists(rec.mask_path)) throw UserError("missing mask for " + rec.name + " under " + (root / "masks").string());
        (rec.split == Split::Train ? splits.train : rec.split == Split::Val ? splits.val : splits.test)
            .push_back(std::move(rec));
    }

    const size_t total = splits.train.size() + splits.val.size() + splits.test.size();
    if (total == kQataTotal &&
        (splits.train.size() != kQataSplitSizes[0] || splits.val.size() != kQataSplitSizes[1] ||
         splits.test.size() != kQataSplitSizes[2])) {
        throw UserError("full QaTa-COV19 table has split sizes (" + std::to_string(splits.train.size()) + ", " +
                        std::to_string(splits.val.size()) + ", " + std::to_string(splits.test.size()) +
                        "), expected (5716, 1429, 2113)");
    }
    return splits;
}

Example load_example(const DatasetRecord& record) {
    Example ex;
    ex.name = record.name;
    ex.text = record.text;
    ex.image = read_png(record.image_path, 1);
    ex.mask = read_png(record.mask_path, 1);
    if (ex.mask.width != ex.image.width || ex.mask.height != ex.image.height)
        throw UserError("mask " + record.mask_path.string() + " does not match its image size");
    for (auto& v : ex.mask.pixels) {
        if (v != 0 && v != 1 && v != 255)
            throw UserError("non-binary mask value " + std::to_string(v) + " in " + record.mask_path.string());
        v = v ? 1 : 0;
    }
    return ex;
}

std::vector<Example> load_examples(const std::vector<DatasetRecord>& records) {
    std::vector<Example> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(load_example(r));
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

bool Shape::contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    switch (kind) {
        case Kind::Disc: return dx * dx + dy * dy <= a * a;
        case Kind::Bar: return std::abs(dx) <= a && std::abs(dy) <= b;
        case Kind::Blob: {
            const double c = std::cos(angle), s = std::sin(angle);
            const double u = (dx * c + dy * s) / a, v = (-dx * s + dy * c) / b;
            return u * u + v * v <= 1.0;
        }
    }
    return false;
}

double Shape::bounding_radius() const {
    switch (kind) {
        case Kind::Disc: return a;
        case Kind::Bar: return std::hypot(a, b);
        case Kind::Blob: return std::max(a, b);
    }
    return a;
}

int quadrant_of(double cx, double cy, int64_t image_size) {
    const double half = static_cast<double>(image_size) / 2.0;
    return (cy < half ? 0 : 2) + (cx < half ? 0 : 1);
}

namespace {

constexpr const char* kRegionNames[4] = {"upper left", "upper right", "lower left", "lower right"};
constexpr const char* kCountWords[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};

std::string swap_words(const std::string& text, const std::map<std::string, std::string>& swaps) {
    std::string out, word;
    auto flush = [&] {
        auto it = swaps.find(word);
        out += it == swaps.end() ? word : it->second;
        word.clear();
    };
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word += c;
        } else {
            flush();
            out += c;
        }
    }
    flush();
    return out;
}

Shape sample_shape(std::mt19937_64& rng, double size) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    Shape s;
    const int kind = static_cast<int>(unit(rng) * 3.0);
    if (kind == 0) {
        s.kind = Shape::Kind::Disc;
        s.a = between(0.05, 0.10) * size;
    } else if (kind == 1) {
        s.kind = Shape::Kind::Bar;
        const double longer = between(0.08, 0.14) * size, shorter = between(0.03, 0.05) * size;
        const bool horizontal = unit(rng) < 0.5;
        s.a = horizontal ? longer : shorter;
        s.b = horizontal ? shorter : longer;
    } else {
        s.kind = Shape::Kind::Blob;
        s.a = between(0.06, 0.11) * size;
        s.b = std::max(0.035 * size, s.a * between(0.55, 0.9));
        s.angle = between(0.0, std::numbers::pi);
    }
    const double margin = s.bounding_radius() + 1.0;
    s.cx = between(margin, size - 1.0 - margin);
    s.cy = between(margin, size - 1.0 - margin);
    return s;
}

SyntheticSample render_sample(const SyntheticSpec& spec, Split split, int64_t index, std::mt19937_64& rng) {
    const int64_t size = spec.image_size;
    const auto dsize = static_cast<double>(size);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, spec.noise_std);

    SyntheticSample sample;
    sample.split = split;
    const int64_t wanted = spec.min_shapes + static_cast<int64_t>(unit(rng) * static_cast<double>(spec.max_shapes - spec.min_shapes + 1));
    for (int attempt = 0; attempt < 400 && static_cast<int64_t>(sample.shapes.size()) < wanted; ++attempt) {
        Shape s = sample_shape(rng, dsize);
        bool clear = true;
        for (const auto& o : sample.shapes)
            if (std::hypot(s.cx - o.cx, s.cy - o.cy) <= s.bounding_radius() + o.bounding_radius() + 2.5) clear = false;
        if (clear) sample.shapes.push_back(s);
    }

    for (const auto& s : sample.shapes) sample.quadrant_lesion[static_cast<size_t>(quadrant_of(s.cx, s.cy, size))] = true;
    const double coupling = split == Split::Train ? spec.confound_strength : 0.0;
    for (size_t q = 0; q < 4; ++q) {
        const bool coupled = unit(rng) < coupling;
        const bool independent = unit(rng) < spec.texture_rate;
        sample.quadrant_texture[q] = coupled ? sample.quadrant_lesion[q] : independent;
    }

    Example& ex = sample.example;
    ex.name = to_string(split) + "_" + std::to_string(index) + ".png";
    ex.image = Image8(size, size, 1);
    ex.mask = Image8(size, size, 1);
    ex.text = describe_lesions(sample.shapes, size);
    const double period = 4.0;
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const auto fx = static_cast<double>(x), fy = static_cast<double>(y);
            bool lesion = false;
            for (const auto& s : sample.shapes) lesion = lesion || s.contains(fx, fy);
            double v = 0.35 + 0.1 * fy / dsize;
            if (lesion) {
                v += spec.lesion_contrast;
            } else if (sample.quadrant_texture[static_cast<size_t>(quadrant_of(fx, fy, size))]) {
                v += spec.texture_amplitude * std::sin(2.0 * std::numbers::pi * (fx + fy) / period);
            }
            v += noise(rng);
            ex.image.at(x, y) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            ex.mask.at(x, y) = lesion ? 1 : 0;
        }
    }
    return sample;
}

}  // namespace

std::string describe_lesions(const std::vector<Shape>& shapes, int64_t image_size) {
    std::array<bool, 4> present{};
    for (const auto& s : shapes) present[static_cast<size_t>(quadrant_of(s.cx, s.cy, image_size))] = true;
    std::vector<std::string> regions;
    for (size_t q = 0; q < 4; ++q)
        if (present[q]) regions.emplace_back(kRegionNames[q]);

    const size_t n = shapes.size();
    std::string text = (n < 10 ? std::string(kCountWords[n]) : std::to_string(n)) +
                       (n == 1 ? " lesion area" : " lesion areas");
    if (regions.empty()) return text;
    text += ", ";
    for (size_t i = 0; i < regions.size(); ++i) {
        if (i > 0) text += i + 1 == regions.size() ? " and " : ", ";
        text += regions[i];
    }
    return text + " region";
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.image_size < 32) throw UserError("synthetic image_size must be at least 32");
    if (spec.min_shapes < 1 || spec.max_shapes < spec.min_shapes) throw UserError("invalid synthetic shape count range");
    if (spec.confound_strength < 0.0 || spec.confound_strength > 1.0)
        throw UserError("confound_strength must lie in [0, 1]");
    if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0) throw UserError("negative synthetic split size");

    SyntheticDataset data;
    const std::array<std::pair<Split, int64_t>, 3> plan{{{Split::Train, spec.n_train}, {Split::Val, spec.n_val}, {Split::Test, spec.n_test}}};
    for (const auto& [split, count] : plan) {
        std::seed_seq seq{spec.seed, static_cast<uint64_t>(split) + 1};
        std::mt19937_64 rng(seq);
        auto& out = split == Split::Train ? data.train : split == Split::Val ? data.val : data.test;
        for (int64_t i = 0; i < count; ++i) out.push_back(render_sample(spec, split, i, rng));
    }
    return data;
}

void write_dataset(const SyntheticDataset& data, const fs::path& root) {
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    std::ofstream table(root / "texts.csv", std::ios::binary);
    if (!table) throw std::runtime_error("cannot write " + (root / "texts.csv").string());
    table << "image_name,description,split\n";
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
        for (const auto& s : data.get(split)) {
            write_png(root / "images" / s.example.name, s.example.image);
            Image8 mask = s.example.mask;
            for (auto& v : mask.pixels) v = v ? 255 : 0;
            write_png(root / "masks" / s.example.name, mask);
            table << csv_escape(s.example.name) << "," << csv_escape(s.example.text) << "," << to_string(split) << "\n";
        }
    }
}

int64_t count_components(const Image8& mask) {
    std::vector<uint8_t> seen(mask.pixels.size(), 0);
    int64_t components = 0;
    for (int64_t y0 = 0; y0 < mask.height; ++y0) {
        for (int64_t x0 = 0; x0 < mask.width; ++x0) {
            const auto i0 = static_cast<size_t>(y0 * mask.width + x0);
            if (!mask.pixels[i0] || seen[i0]) continue;
            ++components;
            std::queue<std::pair<int64_t, int64_t>> todo;
            todo.emplace(x0, y0);
            seen[i0] = 1;
            while (!todo.empty()) {
                auto [x, y] = todo.front();
                todo.pop();
                const int64_t nx[4] = {x - 1, x + 1, x, x}, ny[4] = {y, y, y - 1, y + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nx[k] < 0 || ny[k] < 0 || nx[k] >= mask.width || ny[k] >= mask.height) continue;
                    const auto i = static_cast<size_t>(ny[k] * mask.width + nx[k]);
                    if (mask.pixels[i] && !seen[i]) {
                        seen[i] = 1;
                        todo.emplace(nx[k], ny[k]);
                    }
                }
            }
        }
    }
    return components;
}

// ---------------------------------------------------------------------------
// Tensors

torch::Tensor image_to_tensor(const Image8& image, const RunConfig& config) {
    auto t = torch::from_blob(const_cast<uint8_t*>(image.pixels.data()), {1, 1, image.height, image.width}, torch::kUInt8)
                 .to(torch::kFloat)
                 .div(255.0);
    if (image.height != config.image_size || image.width != config.image_size) {
        t = F::interpolate(t, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{config.image_size, config.image_size})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    }
    return ((t - config.pixel_mean) / config.pixel_std).squeeze(0);
}

torch::Tensor mask_to_tensor(const Image8& mask, int64_t image_size) {
    auto t = torch::from_blob(const_cast<uint8_t*>(mask.pixels.data()), {1, 1, mask.height, mask.width}, torch::kUInt8)
                 .to(torch::kFloat)
                 .gt(0)
                 .to(torch::kFloat);
    if (mask.height != image_size || mask.width != image_size) {
        t = F::interpolate(t, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{image_size, image_size})
                                  .mode(torch::kNearest));
    }
    return t.squeeze(0);
}

Example mirrored(const Example& ex) {
    Example out = ex;
    out.name = "flip_" + ex.name;
    for (int64_t y = 0; y < ex.image.height; ++y)
        for (int64_t x = 0; x < ex.image.width; ++x) {
            out.image.at(x, y) = ex.image.at(ex.image.width - 1 - x, y);
            out.mask.at(x, y) = ex.mask.at(ex.mask.width - 1 - x, y);
        }
    out.text = swap_words(ex.text, {{"left", "right"}, {"right", "left"}});
    return out;
}

Example rotated180(const Example& ex) {
    Example out = ex;
    out.name = "rot_" + ex.name;
    std::reverse(out.image.pixels.begin(), out.image.pixels.end());
    std::reverse(out.mask.pixels.begin(), out.mask.pixels.end());
    out.text = swap_words(ex.text, {{"left", "right"}, {"right", "left"}, {"upper", "lower"}, {"lower", "upper"}});
    return out;
}

SegmentationSet make_set(const std::vector<Example>& examples, const Tokenizer& tokenizer, const RunConfig& config,
                         bool augment) {
    std::vector<Example> all;
    const std::vector<Example>* source = &examples;
    if (augment && (config.augment_flip || config.augment_rotate)) {
        all = examples;
        for (const auto& ex : examples) {
            if (config.augment_flip) all.push_back(mirrored(ex));
            if (config.augment_rotate) all.push_back(rotated180(ex));
        }
        source = &all;
    }
    SegmentationSet set;
    if (source->empty()) return set;
    std::vector<torch::Tensor> images, masks;
    std::vector<TextQuery> queries;
    for (const auto& ex : *source) {
        images.push_back(image_to_tensor(ex.image, config));
        masks.push_back(mask_to_tensor(ex.mask, config.image_size));
        queries.push_back(tokenizer.tokenize(ex.text, config.max_text_len));
        set.names.push_back(ex.name);
        set.texts.push_back(ex.text);
    }
    set.images = torch::stack(images);
    set.masks = torch::stack(masks);
    const auto eos = tokenizer.specials().eos;
    set.tokens = torch::empty({static_cast<int64_t>(queries.size()), config.max_text_len}, torch::kLong);
    set.lengths = torch::empty({static_cast<int64_t>(queries.size())}, torch::kLong);
    for (size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        if (q.token_ids[static_cast<size_t>(q.length - 1)] != eos) throw UserError("tokenizer dropped EOS");
        set.tokens[static_cast<int64_t>(i)] = torch::tensor(q.token_ids, torch::kLong);
        set.lengths[static_cast<int64_t>(i)] = q.length;
    }
    return set;
}

std::vector<Example> examples_of(const std::vector<SyntheticSample>& samples) {
    std::vector<Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.example);
    return out;
}

}  // namespace causalseg

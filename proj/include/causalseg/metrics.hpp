#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace causalseg {

enum class MiouMode {
    TwoClass,    // mean over {background, lesion}
    Foreground,  // lesion IoU only
};

MiouMode parse_miou_mode(const std::string& name);

/// 2|P & G| / (|P| + |G|); 1.0 when both masks are empty.
double dice(const torch::Tensor& pred, const torch::Tensor& gt);

/// IoU of one class; 1.0 when the class is absent from both masks.
double class_iou(const torch::Tensor& pred, const torch::Tensor& gt, bool foreground);

double miou(const torch::Tensor& pred, const torch::Tensor& gt, MiouMode mode = MiouMode::TwoClass);

struct MetricsReport {
    double dice = 0.0;
    double miou = 0.0;
    std::vector<double> per_image_dice;
    std::vector<double> per_image_miou;
    int64_t n_images = 0;

    std::string to_text() const;
    void save(const std::filesystem::path& path) const;
};

/// Accumulates per-image scores from logits thresholded at 0; the report is
/// the mean of per-image values.
class MetricsAccumulator {
public:
    explicit MetricsAccumulator(MiouMode mode = MiouMode::TwoClass) : mode_(mode) {}

    /// logits, gt: [B, 1, H, W] or [B, H, W]; gt binary.
    void add_batch(const torch::Tensor& logits, const torch::Tensor& gt);
    void add(const torch::Tensor& pred, const torch::Tensor& gt);
    MetricsReport report() const;

private:
    MiouMode mode_;
    std::vector<double> dice_, miou_;
};

}  // namespace causalseg

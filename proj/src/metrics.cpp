#include "causalseg/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "causalseg/errors.hpp"

namespace causalseg {

namespace {

void check_pair(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.sizes() != gt.sizes()) throw UserError("prediction and ground truth shapes differ");
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

MiouMode parse_miou_mode(const std::string& name) {
    if (name == "two_class") return MiouMode::TwoClass;
    if (name == "foreground") return MiouMode::Foreground;
    throw UserError("unknown mIoU mode '" + name + "'");
}

double dice(const torch::Tensor& pred, const torch::Tensor& gt) {
    check_pair(pred, gt);
    auto p = pred.to(torch::kBool), g = gt.to(torch::kBool);
    const auto inter = (p & g).sum().item<int64_t>();
    const auto total = p.sum().item<int64_t>() + g.sum().item<int64_t>();
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double class_iou(const torch::Tensor& pred, const torch::Tensor& gt, bool foreground) {
    check_pair(pred, gt);
    auto p = pred.to(torch::kBool), g = gt.to(torch::kBool);
    if (!foreground) {
        p = p.logical_not();
        g = g.logical_not();
    }
    const auto inter = (p & g).sum().item<int64_t>();
    const auto uni = (p | g).sum().item<int64_t>();
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double miou(const torch::Tensor& pred, const torch::Tensor& gt, MiouMode mode) {
    const double lesion = class_iou(pred, gt, true);
    if (mode == MiouMode::Foreground) return lesion;
    return 0.5 * (lesion + class_iou(pred, gt, false));
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "dice=" << dice << "\n" << "miou=" << miou << "\n" << "n_images=" << n_images << "\n";
    return os.str();
}

void MetricsReport::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics report " + path.string());
    out << to_text();
}

void MetricsAccumulator::add(const torch::Tensor& pred, const torch::Tensor& gt) {
    dice_.push_back(dice(pred, gt));
    miou_.push_back(miou(pred, gt, mode_));
}

void MetricsAccumulator::add_batch(const torch::Tensor& logits, const torch::Tensor& gt) {
    check_pair(logits, gt);
    auto pred = logits.gt(0);
    for (int64_t b = 0; b < logits.size(0); ++b) add(pred[b], gt[b]);
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r;
    r.per_image_dice = dice_;
    r.per_image_miou = miou_;
    r.n_images = static_cast<int64_t>(dice_.size());
    r.dice = mean(dice_);
    r.miou = mean(miou_);
    return r;
}

}  // namespace causalseg

#include "causalseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>

#include "causalseg/errors.hpp"

namespace causalseg {

namespace fs = std::filesystem;

LossBundle LossTerms::values() const {
    LossBundle b;
    b.causal = causal.item<double>();
    b.confounding = confounding.item<double>();
    b.lambda = lambda;
    b.total = total.item<double>();
    return b;
}

namespace {

// Per-pixel cross-entropy ceiling, the same bound PyTorch's BCELoss applies by
// clamping log(p) at -100. Past it the pixel contributes no gradient.
constexpr double kMaxPixelLoss = 100.0;

torch::Tensor bounded_bce(const torch::Tensor& logits, const torch::Tensor& target) {
    return torch::binary_cross_entropy_with_logits(logits, target, {}, {}, at::Reduction::None)
        .clamp_max(kMaxPixelLoss)
        .mean();
}

}  // namespace

LossTerms compute_losses(const torch::Tensor& logits_causal, const torch::Tensor& logits_confounding,
                         const torch::Tensor& gt, double lambda) {
    if (lambda < 0.0) throw UserError("lambda must be non-negative");
    if (logits_causal.sizes() != gt.sizes()) throw UserError("causal logits and ground truth shapes differ");
    if (!(gt.eq(0) | gt.eq(1)).all().item<bool>()) throw UserError("ground truth mask is not binary");
    const auto target = gt.to(logits_causal.dtype());

    LossTerms t;
    t.lambda = lambda;
    t.causal = bounded_bce(logits_causal, target);
    if (logits_confounding.defined()) {
        if (logits_confounding.sizes() != gt.sizes())
            throw UserError("confounding logits and ground truth shapes differ");
        t.confounding = bounded_bce(logits_confounding, target);
    } else {
        t.confounding = torch::zeros({}, logits_causal.options());
    }
    t.total = t.causal - lambda * t.confounding;
    return t;
}

Batch gather_batch(const SegmentationSet& set, const torch::Tensor& indices) {
    return {set.images.index_select(0, indices), set.masks.index_select(0, indices),
            set.tokens.index_select(0, indices), set.lengths.index_select(0, indices)};
}

LossBundle train_step(CausalSegModel& model, torch::optim::Optimizer& optimizer, const Batch& batch, double lambda) {
    model->train();
    optimizer.zero_grad();
    auto out = model->forward(batch.images, batch.tokens, batch.lengths);
    auto losses = compute_losses(out.logits_causal, out.logits_confounding, batch.masks, lambda);
    const LossBundle values = losses.values();
    if (!std::isfinite(values.total) || !std::isfinite(values.causal) || !std::isfinite(values.confounding)) {
        std::ostringstream msg;
        msg << "non-finite loss: L=" << values.total << " L_c=" << values.causal << " L_s=" << values.confounding
            << " lambda=" << lambda;
        throw DivergenceError(msg.str());
    }
    losses.total.backward();
    optimizer.step();
    return values;
}

double cosine_lr(double base, int64_t epoch, int64_t max_epochs) {
    const double progress = static_cast<double>(std::clamp<int64_t>(epoch, 0, max_epochs)) / static_cast<double>(max_epochs);
    return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

bool TrainState::observe(double val_dice) {
    if (val_dice > best_val_dice) {
        best_val_dice = val_dice;
        best_epoch = epoch;
        epochs_since_improvement = 0;
        return true;
    }
    ++epochs_since_improvement;
    return false;
}

bool TrainState::should_stop(int64_t patience, int64_t max_epochs) const {
    return epochs_since_improvement >= patience || epoch >= max_epochs;
}

Segmenter build_segmenter(const RunConfig& config, std::shared_ptr<Tokenizer> tokenizer) {
    if (!tokenizer) throw std::invalid_argument("build_segmenter needs a tokenizer");
    if (config.deterministic) at::globalContext().setDeterministicAlgorithms(true, true);
    torch::manual_seed(config.seed);
    Segmenter seg;
    seg.config = config;
    seg.tokenizer = std::move(tokenizer);
    seg.model = CausalSegModel(config, seg.tokenizer->vocab_size(), seg.tokenizer->specials().eos);
    if (!config.clip_weights.empty()) load_clip_weights(seg.model, config.clip_weights);
    if (config.freeze_encoders) seg.model->set_encoders_trainable(false);
    return seg;
}

namespace {

nlohmann::json state_to_json(const TrainState& s) {
    return {{"epoch", s.epoch},
            {"best_val_dice", s.best_val_dice},
            {"best_epoch", s.best_epoch},
            {"epochs_since_improvement", s.epochs_since_improvement},
            {"learning_rate", s.learning_rate},
            {"seed", s.seed}};
}

TrainState state_from_json(const nlohmann::json& j) {
    TrainState s;
    s.epoch = j.at("epoch").get<int64_t>();
    s.best_val_dice = j.at("best_val_dice").get<double>();
    s.best_epoch = j.at("best_epoch").get<int64_t>();
    s.epochs_since_improvement = j.at("epochs_since_improvement").get<int64_t>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.seed = j.at("seed").get<uint64_t>();
    return s;
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
    c10::IValue v;
    if (!archive.try_read(key, v) || !v.isString()) throw UserError("checkpoint lacks '" + key + "'");
    return v.toStringRef();
}

void write_metrics_header(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,L,L_c,L_s,lr,val_dice,val_miou\n";
}

void append_metrics(const fs::path& path, const EpochRecord& r) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to " + path.string());
    out << std::setprecision(10) << r.epoch << "," << r.loss.total << "," << r.loss.causal << ","
        << r.loss.confounding << "," << r.lr << "," << r.val_dice << "," << r.val_miou << "\n";
}

}  // namespace

void save_checkpoint(const fs::path& path, const Segmenter& seg, const TrainState& state,
                     torch::optim::Optimizer* optimizer) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive model_archive;
    seg.model->save(model_archive);
    archive.write("model", model_archive);
    if (optimizer) {
        torch::serialize::OutputArchive optim_archive;
        optimizer->save(optim_archive);
        archive.write("optimizer", optim_archive);
    }
    archive.write("config", c10::IValue(to_json(seg.config).dump()));
    archive.write("arch_hash", c10::IValue(architecture_hash(seg.config)));
    archive.write("tokenizer_kind", c10::IValue(seg.tokenizer->kind()));
    archive.write("tokenizer", c10::IValue(seg.tokenizer->serialize()));
    archive.write("state", c10::IValue(state_to_json(state).dump()));
    // Write then rename so an interrupted save never leaves a torn checkpoint.
    const fs::path tmp = path.string() + ".tmp";
    try {
        archive.save_to(tmp.string());
    } catch (const c10::Error& e) {
        throw std::runtime_error("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw UserError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw UserError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    LoadedCheckpoint out;
    RunConfig config = resolve_config(nlohmann::json::parse(read_string(archive, "config")));
    out.arch_hash = read_string(archive, "arch_hash");
    if (out.arch_hash != architecture_hash(config)) throw UserError("checkpoint config hash does not match its contents");
    std::shared_ptr<Tokenizer> tokenizer =
        reload_tokenizer(read_string(archive, "tokenizer_kind"), read_string(archive, "tokenizer"), config.vocab_size);
    out.state = state_from_json(nlohmann::json::parse(read_string(archive, "state")));

    RunConfig build = config;
    build.clip_weights.clear();  // the archive already holds every weight
    out.segmenter = build_segmenter(build, tokenizer);
    out.segmenter.config = config;
    torch::serialize::InputArchive model_archive;
    archive.read("model", model_archive);
    out.segmenter.model->load(model_archive);
    out.segmenter.model->eval();
    return out;
}

MetricsReport evaluate(CausalSegModel& model, const SegmentationSet& set, int64_t batch_size, MiouMode mode) {
    if (set.size() == 0) throw UserError("cannot evaluate on an empty dataset");
    const bool was_training = model->is_training();
    model->eval();
    torch::NoGradGuard no_grad;
    MetricsAccumulator acc(mode);
    for (int64_t start = 0; start < set.size(); start += batch_size) {
        const int64_t n = std::min(batch_size, set.size() - start);
        auto batch = gather_batch(set, torch::arange(start, start + n, torch::kLong));
        auto out = model->forward(batch.images, batch.tokens, batch.lengths);
        acc.add_batch(out.logits_causal, batch.masks);
    }
    model->train(was_training);
    return acc.report();
}

FitResult fit(Segmenter& seg, const SegmentationSet& train, const SegmentationSet& val, const fs::path& out_dir,
              const FitOptions& options) {
    if (train.size() == 0 || val.size() == 0) throw UserError("training and validation sets must be non-empty");
    const RunConfig& cfg = seg.config;
    fs::create_directories(out_dir);
    save_config(cfg, out_dir / "config.json");
    if (auto* word = dynamic_cast<WordTokenizer*>(seg.tokenizer.get())) word->save(out_dir / "vocab.txt");
    const fs::path metrics_path = out_dir / "metrics.csv";
    write_metrics_header(metrics_path);

    std::vector<torch::Tensor> trainable;
    for (auto& p : seg.model->parameters())
        if (p.requires_grad()) trainable.push_back(p);
    torch::optim::Adam optimizer(trainable, torch::optim::AdamOptions(cfg.lr));
    const MiouMode mode = parse_miou_mode(cfg.miou_mode);

    FitResult result;
    result.best_checkpoint = out_dir / "best.ckpt";
    TrainState& state = result.state;
    state.seed = cfg.seed;
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::vector<int64_t> order(static_cast<size_t>(train.size()));

    while (!state.should_stop(cfg.patience, cfg.max_epochs)) {
        state.learning_rate = cosine_lr(cfg.lr, state.epoch, cfg.max_epochs);
        for (auto& group : optimizer.param_groups())
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(state.learning_rate);

        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const auto perm = torch::tensor(order, torch::kLong);

        EpochRecord rec;
        rec.epoch = state.epoch + 1;
        rec.lr = state.learning_rate;
        rec.loss.lambda = cfg.lambda;
        int64_t steps = 0;
        for (int64_t start = 0; start < train.size(); start += cfg.batch_size) {
            const int64_t n = std::min(cfg.batch_size, train.size() - start);
            auto step = train_step(seg.model, optimizer, gather_batch(train, perm.narrow(0, start, n)), cfg.lambda);
            rec.loss.total += step.total;
            rec.loss.causal += step.causal;
            rec.loss.confounding += step.confounding;
            ++steps;
        }
        rec.loss.total /= static_cast<double>(steps);
        rec.loss.causal /= static_cast<double>(steps);
        rec.loss.confounding /= static_cast<double>(steps);

        const auto report = evaluate(seg.model, val, cfg.batch_size, mode);
        rec.val_dice = report.dice;
        rec.val_miou = report.miou;
        ++state.epoch;
        const bool improved = state.observe(report.dice);
        append_metrics(metrics_path, rec);
        result.history.push_back(rec);
        if (improved) save_checkpoint(result.best_checkpoint, seg, state, &optimizer);
        save_checkpoint(out_dir / "last.ckpt", seg, state, &optimizer);

        if (options.verbose) {
            std::cout << "epoch " << rec.epoch << " L=" << rec.loss.total << " L_c=" << rec.loss.causal
                      << " L_s=" << rec.loss.confounding << " lr=" << rec.lr << " val_dice=" << rec.val_dice
                      << " val_miou=" << rec.val_miou << (improved ? " *" : "") << std::endl;
        }
        if (options.on_epoch && !options.on_epoch(rec)) break;
    }
    return result;
}

}  // namespace causalseg

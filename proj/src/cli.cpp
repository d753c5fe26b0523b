#include "causalseg/cli.hpp"

#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "causalseg/config.hpp"
#include "causalseg/data.hpp"
#include "causalseg/errors.hpp"
#include "causalseg/training.hpp"
#include "causalseg/visualize.hpp"

namespace causalseg {

namespace fs = std::filesystem;

namespace {

/// Flag values that override config-file keys when given.
struct Overrides {
    std::string config_path;
    std::optional<std::string> scale, dataset_root, out_dir, clip_weights, bpe_merges, miou_mode;
    std::optional<double> lambda, lr;
    std::optional<int64_t> epochs, patience, batch_size, image_size, kernel_size, channels, k_up;
    std::optional<uint64_t> seed;
    bool no_intervention = false;
    bool freeze_encoders = false;

    void attach(CLI::App* cmd, bool training) {
        cmd->add_option("--config", config_path, "Flat JSON config file");
        cmd->add_option("--dataset-root", dataset_root, "Dataset root (images/, masks/, texts.csv)");
        cmd->add_option("--out-dir", out_dir, "Directory for every artifact of the run");
        cmd->add_option("--miou-mode", miou_mode, "two_class or foreground");
        if (!training) return;
        cmd->add_option("--scale", scale, "tiny or full");
        cmd->add_option("--lambda", lambda, "Adversarial coefficient");
        cmd->add_option("--lr", lr, "Initial learning rate");
        cmd->add_option("--epochs", epochs, "Maximum epochs");
        cmd->add_option("--patience", patience, "Early-stopping patience in epochs");
        cmd->add_option("--batch-size", batch_size);
        cmd->add_option("--seed", seed);
        cmd->add_option("--image-size", image_size);
        cmd->add_option("--kernel-size", kernel_size, "Dynamic kernel size K");
        cmd->add_option("--channels", channels, "Decoder width C");
        cmd->add_option("--k-up", k_up, "CARAFE reassembly kernel size");
        cmd->add_option("--clip-weights", clip_weights, "TorchScript CLIP checkpoint");
        cmd->add_option("--bpe-merges", bpe_merges, "CLIP BPE merges file");
        cmd->add_flag("--no-intervention", no_intervention, "Ablate the causal intervention module");
        cmd->add_flag("--freeze-encoders", freeze_encoders, "Keep encoder weights fixed");
    }

    nlohmann::json merged() const {
        nlohmann::json j = nlohmann::json::object();
        if (!config_path.empty()) {
            j = to_json(load_config(config_path));
        }
        auto put = [&](const char* key, const auto& opt) {
            if (opt) j[key] = *opt;
        };
        put("scale", scale);
        put("dataset_root", dataset_root);
        put("out_dir", out_dir);
        put("clip_weights", clip_weights);
        put("bpe_merges", bpe_merges);
        put("miou_mode", miou_mode);
        put("lambda", lambda);
        put("lr", lr);
        put("max_epochs", epochs);
        put("patience", patience);
        put("batch_size", batch_size);
        put("image_size", image_size);
        put("kernel_size", kernel_size);
        put("decoder_channels", channels);
        put("carafe_k_up", k_up);
        put("seed", seed);
        if (no_intervention) j["causal_intervention"] = false;
        if (freeze_encoders) j["freeze_encoders"] = true;
        return j;
    }
};

TableColumns columns_of(const RunConfig& c) { return {c.image_column, c.text_column, c.split_column}; }

DatasetSplits open_dataset(const std::string& root, const RunConfig& config) {
    if (root.empty()) throw UserError("no dataset root given (--dataset-root)");
    if (!fs::exists(root)) throw UserError("dataset root does not exist: " + root);
    return load_qata(root, columns_of(config));
}

int cmd_train(const Overrides& ov, bool verbose, std::ostream& out) {
    const RunConfig config = resolve_config(ov.merged());
    const auto splits = open_dataset(config.dataset_root, config);
    if (splits.train.empty() || splits.val.empty()) throw UserError("dataset needs non-empty train and val splits");

    std::shared_ptr<Tokenizer> tokenizer;
    if (!config.bpe_merges.empty()) {
        tokenizer = std::make_shared<BpeTokenizer>(BpeTokenizer::load(config.bpe_merges, config.vocab_size));
    } else {
        std::vector<std::string> texts;
        for (const auto& r : splits.train) texts.push_back(r.text);
        tokenizer = std::make_shared<WordTokenizer>(WordTokenizer::build(texts));
    }
    const auto train = make_set(load_examples(splits.train), *tokenizer, config, /*augment=*/true);
    const auto val = make_set(load_examples(splits.val), *tokenizer, config);

    Segmenter seg = build_segmenter(config, tokenizer);
    FitOptions options;
    options.verbose = verbose;
    const auto result = fit(seg, train, val, config.out_dir, options);
    out << "best checkpoint: " << result.best_checkpoint.string() << " (val dice " << result.state.best_val_dice
        << " at epoch " << result.state.best_epoch << ")\n";
    return kExitOk;
}

int cmd_eval(const Overrides& ov, const std::string& checkpoint, const std::string& split_name, std::ostream& out) {
    const Split split = parse_split(split_name);
    auto loaded = load_checkpoint(checkpoint);
    RunConfig config = loaded.segmenter.config;
    if (!ov.config_path.empty()) {
        const RunConfig requested = load_config(ov.config_path);
        if (architecture_hash(requested) != loaded.arch_hash)
            throw UserError("checkpoint " + checkpoint + " was trained with a different model config (hash " +
                            loaded.arch_hash + " vs " + architecture_hash(requested) + ")");
    }
    if (ov.dataset_root) config.dataset_root = *ov.dataset_root;
    if (ov.miou_mode) config.miou_mode = *ov.miou_mode;
    const auto splits = open_dataset(config.dataset_root, config);
    const auto& records = splits.get(split);
    if (records.empty()) throw UserError("split '" + split_name + "' is empty");
    const auto set = make_set(load_examples(records), *loaded.segmenter.tokenizer, config);
    const auto report = evaluate(loaded.segmenter.model, set, config.batch_size, parse_miou_mode(config.miou_mode));

    const fs::path out_dir = ov.out_dir ? fs::path(*ov.out_dir) : fs::path(checkpoint).parent_path();
    report.save(out_dir / ("eval_" + to_string(split) + ".txt"));
    out << "split=" << to_string(split) << "\n" << report.to_text();
    return kExitOk;
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw UserError(std::string(what) + " not found: " + path);
}

int cmd_predict(const std::string& checkpoint, const std::string& image_path, const std::string& text,
                const std::string& out_path, std::ostream& out) {
    require_file(image_path, "image");
    auto loaded = load_checkpoint(checkpoint);
    const auto p = predict(loaded.segmenter, read_png(image_path, 1), text);
    write_png(out_path, prediction_image(p));
    out << "foreground_pixels=" << p.foreground.sum().item<int64_t>() << "\n";
    return kExitOk;
}

int cmd_visualize(const std::string& checkpoint, const std::string& image_path, const std::string& text,
                  const std::string& mask_path, const std::string& out_path, std::ostream& out) {
    require_file(image_path, "image");
    std::optional<Image8> gt;
    if (!mask_path.empty()) {
        require_file(mask_path, "mask");
        gt = read_png(mask_path, 1);
    }
    auto loaded = load_checkpoint(checkpoint);
    const Image8 image = read_png(image_path, 1);
    const auto p = predict(loaded.segmenter, image, text);
    write_png(out_path, render_panel(loaded.segmenter, image, p, gt));
    const fs::path pred_path = fs::path(out_path).replace_extension().string() + "_pred.png";
    write_png(pred_path, prediction_image(p));
    out << "panel=" << out_path << "\nprediction=" << pred_path.string() << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Referring medical image segmentation with causal intervention"};
    app.require_subcommand(1);

    Overrides train_ov, eval_ov;
    bool verbose = false;
    auto* train = app.add_subcommand("train", "Train a model and keep the best checkpoint");
    train_ov.attach(train, true);
    train->add_flag("-v,--verbose", verbose, "Print one line per epoch");

    std::string checkpoint, split = "val";
    auto* eval = app.add_subcommand("eval", "Dice / mIoU of a checkpoint on a split");
    eval_ov.attach(eval, false);
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--split", split, "train, val or test");

    std::string image, text, mask, out_path;
    auto* pred = app.add_subcommand("predict", "Write the predicted mask for one image");
    pred->add_option("--checkpoint", checkpoint)->required();
    pred->add_option("--image", image)->required();
    pred->add_option("--text", text)->required();
    pred->add_option("--out", out_path)->required();

    auto* vis = app.add_subcommand("visualize", "Write an input / truth / prediction / mask panel");
    vis->add_option("--checkpoint", checkpoint)->required();
    vis->add_option("--image", image)->required();
    vis->add_option("--text", text)->required();
    vis->add_option("--mask", mask, "Ground-truth mask");
    vis->add_option("--out", out_path)->required();

    SyntheticSpec spec;
    std::string synth_root;
    auto* gen = app.add_subcommand("gen-synthetic", "Render the synthetic confounded dataset");
    gen->add_option("--out", synth_root)->required();
    gen->add_option("--n-train", spec.n_train);
    gen->add_option("--n-val", spec.n_val);
    gen->add_option("--n-test", spec.n_test);
    gen->add_option("--image-size", spec.image_size);
    gen->add_option("--confound", spec.confound_strength, "Train-split texture/lesion coupling in [0, 1]");
    gen->add_option("--min-shapes", spec.min_shapes);
    gen->add_option("--max-shapes", spec.max_shapes);
    gen->add_option("--seed", spec.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    }

    try {
        if (*train) return cmd_train(train_ov, verbose, out);
        if (*eval) return cmd_eval(eval_ov, checkpoint, split, out);
        if (*pred) return cmd_predict(checkpoint, image, text, out_path, out);
        if (*vis) return cmd_visualize(checkpoint, image, text, mask, out_path, out);
        if (*gen) {
            write_dataset(generate_synthetic(spec), synth_root);
            out << "wrote " << spec.n_train + spec.n_val + spec.n_test << " images to " << synth_root << "\n";
            return kExitOk;
        }
    } catch (const UserError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    }
    return kExitUserError;
}

}  // namespace causalseg

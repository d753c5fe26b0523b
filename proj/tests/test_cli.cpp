#include "doctest_torch.hpp"

#include <fstream>
#include <sstream>

#include "causalseg/cli.hpp"
#include "causalseg/config.hpp"
#include "causalseg/errors.hpp"
#include "causalseg/image_io.hpp"
#include "causalseg/visualize.hpp"
#include "test_support.hpp"

using namespace causalseg;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "causalseg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// One synthetic dataset and one short training run shared by the tests below.
struct Workspace {
    fs::path root = fs::temp_directory_path() / "causalseg_cli";
    fs::path data = root / "data";
    fs::path run = root / "run";
    fs::path config = root / "unit.json";
    Run train;

    Workspace() {
        fs::remove_all(root);
        fs::create_directories(root);
        save_config(testing::unit_config(32), config);
        const auto gen = cli({"gen-synthetic", "--out", data.string(), "--n-train", "8", "--n-val", "4", "--n-test", "4",
                              "--image-size", "32", "--seed", "1"});
        REQUIRE(gen.code == 0);
        train = cli({"train", "--config", config.string(), "--dataset-root", data.string(), "--out-dir", run.string(),
                     "--epochs", "2", "--lr", "1e-3", "--lambda", "0.05"});
    }
};

Workspace& workspace() {
    static Workspace ws;
    return ws;
}

}  // namespace

TEST_CASE("train on a synthetic directory writes the best checkpoint") {
    auto& ws = workspace();
    INFO(ws.train.err);
    CHECK(ws.train.code == 0);
    CHECK(fs::exists(ws.run / "best.ckpt"));
    CHECK(fs::exists(ws.run / "metrics.csv"));
    CHECK(ws.train.out.find("best checkpoint") != std::string::npos);
}

TEST_CASE("the resolved lambda is echoed into the run's config.json") {
    auto& ws = workspace();
    auto j = nlohmann::json::parse(slurp(ws.run / "config.json"));
    CHECK(j.at("lambda").get<double>() == 0.05);
    CHECK(j.at("max_epochs").get<int64_t>() == 2);
    CHECK(j.at("image_size").get<int64_t>() == 32);
}

TEST_CASE("a missing dataset root is a user error naming the path") {
    const std::string missing = (workspace().root / "no_such_dir").string();
    auto r = cli({"train", "--dataset-root", missing, "--out-dir", (workspace().root / "x").string()});
    CHECK(r.code == kExitUserError);
    CHECK(r.err.find(missing) != std::string::npos);
    CHECK(cli({"train", "--no-such-flag"}).code == kExitUserError);
    CHECK(cli({}).code == kExitUserError);
}

TEST_CASE("eval is deterministic and writes its report") {
    auto& ws = workspace();
    const auto ckpt = (ws.run / "best.ckpt").string();
    auto a = cli({"eval", "--checkpoint", ckpt, "--split", "test", "--dataset-root", ws.data.string()});
    auto b = cli({"eval", "--checkpoint", ckpt, "--split", "test", "--dataset-root", ws.data.string()});
    INFO(a.err);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.find("n_images=4") != std::string::npos);
    CHECK(fs::exists(ws.run / "eval_test.txt"));
}

TEST_CASE("eval with a mismatched config fails before writing anything") {
    auto& ws = workspace();
    auto other = testing::unit_config(32);
    other.decoder_channels = 24;
    const auto other_path = ws.root / "other.json";
    save_config(other, other_path);
    const auto out_dir = ws.root / "mismatch";
    auto r = cli({"eval", "--checkpoint", (ws.run / "best.ckpt").string(), "--config", other_path.string(), "--split",
                  "val", "--dataset-root", ws.data.string(), "--out-dir", out_dir.string()});
    CHECK(r.code == kExitUserError);
    CHECK(r.out.empty());
    CHECK_FALSE(fs::exists(out_dir));
}

TEST_CASE("visualize: panel layout, overlay matches the prediction, heatmap colours") {
    auto& ws = workspace();
    const auto panel_path = ws.root / "panel.png";
    auto r = cli({"visualize", "--checkpoint", (ws.run / "best.ckpt").string(), "--image",
                  (ws.data / "images" / "test_0.png").string(), "--mask", (ws.data / "masks" / "test_0.png").string(),
                  "--text", "one lesion area, upper left region", "--out", panel_path.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    auto panel = read_png(panel_path, 3);
    auto pred = read_png(ws.root / "panel_pred.png", 1);
    CHECK(panel.width == 4 * 32);
    CHECK(panel.height == 32);
    int64_t red = 0, fg = 0;
    for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x) {
            red += panel.at(64 + x, y, 0) == 255 && panel.at(64 + x, y, 1) == 0 && panel.at(64 + x, y, 2) == 0;
            fg += pred.at(x, y) == 255;
            CHECK((pred.at(x, y) == 0 || pred.at(x, y) == 255));
        }
    CHECK(red == fg);

    auto low = heat_color(0.0), high = heat_color(1.0);
    CHECK(low[0] == 0);
    CHECK(low[2] > 0);
    CHECK(high[0] > 0);
    CHECK(high[2] == 0);
    CHECK(heat_color(-3.0) == low);
    CHECK(heat_color(7.0) == high);

    auto p = cli({"predict", "--checkpoint", (ws.run / "best.ckpt").string(), "--image",
                  (ws.data / "images" / "test_0.png").string(), "--text", "one lesion area, upper left region",
                  "--out", (ws.root / "single.png").string()});
    CHECK(p.code == 0);
    CHECK(p.out == "foreground_pixels=" + std::to_string(fg) + "\n");
    CHECK(cli({"predict", "--checkpoint", (ws.run / "best.ckpt").string(), "--image", "/nonexistent.png", "--text",
               "x", "--out", (ws.root / "y.png").string()})
              .code == kExitUserError);
}

TEST_CASE("config file round trip and validation") {
    auto c = testing::unit_config(64);
    c.lambda = 0.125;
    c.miou_mode = "foreground";
    const auto path = workspace().root / "round.json";
    save_config(c, path);
    CHECK(load_config(path) == c);
    CHECK(architecture_hash(load_config(path)) == architecture_hash(c));
    auto wider = c;
    wider.decoder_channels = 32;
    CHECK(architecture_hash(wider) != architecture_hash(c));
    auto faster = c;
    faster.lr = 1.0;
    CHECK(architecture_hash(faster) == architecture_hash(c));

    CHECK_THROWS_AS(resolve_config({{"learning_rate", 0.1}}), UserError);
    CHECK_THROWS_AS(resolve_config({{"lambda", -1.0}}), UserError);
    CHECK_THROWS_AS(resolve_config({{"miou_mode", "three_class"}}), UserError);
    CHECK_THROWS_AS(resolve_config({{"lr", "fast"}}), UserError);
    CHECK(resolve_config({{"scale", "full"}}).decoder_channels == 512);
}

TEST_CASE("config snapshot of the published defaults") {
    for (auto scale : {ModelScale::Tiny, ModelScale::Full}) {
        const auto c = preset(scale);
        CHECK(c.image_size == 224);
        CHECK(c.max_text_len == 20);
        CHECK(c.lr == 3e-5);
        CHECK(c.lambda == 0.05);
        CHECK(c.max_epochs == 2000);
        CHECK(c.patience == 100);
        CHECK(c.kernel_size == 3);
        CHECK(c.vocab_size == 49152);
        CHECK(c.miou_mode == "two_class");
        CHECK(c.causal_intervention);
    }
    const auto j = to_json(resolve_config(nlohmann::json::object()));
    CHECK(j.at("image_size") == 224);
    CHECK(j.at("max_text_len") == 20);
    CHECK(j.at("lr") == 3e-5);
    CHECK(j.at("lambda") == 0.05);
    CHECK(j.at("max_epochs") == 2000);
    CHECK(j.at("patience") == 100);
    CHECK(preset(ModelScale::Full).text_context == 77);
    CHECK(preset(ModelScale::Full).embed_dim == 512);
    CHECK(preset(ModelScale::Full).decoder_channels == 512);
}

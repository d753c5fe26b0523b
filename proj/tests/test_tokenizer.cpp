#include "doctest_torch.hpp"

#include <filesystem>
#include <random>

#include "causalseg/config.hpp"
#include "causalseg/errors.hpp"
#include "causalseg/tokenizer.hpp"

using namespace causalseg;

namespace {

const char* kMerges =
    "#version: 0.2\n"
    "l o\n"
    "lo w</w>\n"
    "e r</w>\n"
    "a r\n";

// Index of a printable ASCII byte in CLIP's byte table: printable bytes come
// first, in order, starting at '!'.
int64_t byte_id(char c) { return static_cast<int64_t>(c) - '!'; }

}  // namespace

TEST_CASE("empty text is SOS, EOS, then padding") {
    auto tok = WordTokenizer::build({"left lung"});
    auto q = tok.tokenize("", 20);
    CHECK(q.length == 2);
    CHECK(q.token_ids.size() == 20);
    CHECK(q.token_ids[0] == tok.specials().sos);
    CHECK(q.token_ids[1] == tok.specials().eos);
    for (size_t i = 2; i < 20; ++i) CHECK(q.token_ids[i] == tok.specials().pad);
}

TEST_CASE("a 40-word text truncates to SOS + 18 words + EOS") {
    std::string text;
    for (int i = 0; i < 40; ++i) text += "w" + std::to_string(i) + " ";
    auto tok = WordTokenizer::build({text});
    auto q = tok.tokenize(text, 20);
    CHECK(q.length == 20);
    CHECK(q.token_ids.back() == tok.specials().eos);
    auto body = tok.encode(text);
    REQUIRE(body.size() == 40);
    for (size_t i = 0; i < 18; ++i) CHECK(q.token_ids[i + 1] == body[i]);
    CHECK_THROWS_AS(tok.tokenize(text, 1), UserError);
}

TEST_CASE("property: sentinels, length and id range hold for random texts") {
    std::mt19937_64 rng(3);
    const std::vector<std::string> words{"bilateral", "pulmonary", "infection", "left", "right", "upper",
                                         "lower",     "lung",      "two",       "areas", ",", "zone"};
    std::vector<std::string> corpus;
    for (int t = 0; t < 200; ++t) {
        std::string s;
        const int n = static_cast<int>(rng() % 30);
        for (int i = 0; i < n; ++i) s += words[rng() % words.size()] + " ";
        corpus.push_back(s);
    }
    auto tok = WordTokenizer::build(corpus);
    for (const auto& s : corpus) {
        for (int64_t max_len : {2, 5, 20, 40}) {
            auto q = tok.tokenize(s, max_len);
            CHECK(static_cast<int64_t>(q.token_ids.size()) == max_len);
            CHECK(q.token_ids[0] == tok.specials().sos);
            CHECK(q.token_ids[static_cast<size_t>(q.length - 1)] == tok.specials().eos);
            CHECK(q.length >= 2);
            CHECK(q.length <= max_len);
            for (size_t i = static_cast<size_t>(q.length); i < q.token_ids.size(); ++i)
                CHECK(q.token_ids[i] == tok.specials().pad);
            for (auto id : q.token_ids) {
                CHECK(id >= 0);
                CHECK(id < tok.vocab_size());
            }
        }
    }
}

TEST_CASE("word vocabulary: case folding, unknown words, file round trip") {
    auto tok = WordTokenizer::build({"Left lung, Upper zone."});
    CHECK(WordTokenizer::split_words("Left lung, Upper zone.") ==
          std::vector<std::string>{"left", "lung", "upper", "zone"});
    CHECK(tok.vocab_size() == 8);
    CHECK(tok.encode("LEFT") == tok.encode("left"));
    CHECK(tok.encode("spleen") == std::vector<int64_t>{tok.unk()});

    auto path = std::filesystem::temp_directory_path() / "causalseg_vocab_test.txt";
    tok.save(path);
    auto back = WordTokenizer::load(path);
    std::filesystem::remove(path);
    CHECK(back.tokens() == tok.tokens());
    CHECK(back.tokenize("upper left lung", 20).token_ids == tok.tokenize("upper left lung", 20).token_ids);
    CHECK_THROWS_AS(WordTokenizer::parse("no header\n"), UserError);
    CHECK_THROWS_AS(WordTokenizer::parse("#vocab pad=0 sos=1 eos=2\n<pad>\n"), UserError);
}

TEST_CASE("BPE: vocabulary layout follows CLIP") {
    auto tok = BpeTokenizer::parse(kMerges);
    CHECK(tok.merge_count() == 4);
    CHECK(tok.vocab_size() == 256 + 256 + 4 + 2);
    CHECK(tok.specials().pad == 0);
    CHECK(tok.specials().sos == 516);
    CHECK(tok.specials().eos == 517);
    CHECK(BpeTokenizer::parse(kMerges, 259).merge_count() == 1);
}

TEST_CASE("BPE: merges apply in rank order with the end-of-word marker") {
    auto tok = BpeTokenizer::parse(kMerges);
    CHECK(tok.bpe("low") == std::vector<std::string>{"low</w>"});
    CHECK(tok.bpe("lo") == std::vector<std::string>{"l", "o</w>"});
    CHECK(tok.bpe("lower") == std::vector<std::string>{"lo", "w", "er</w>"});
    CHECK(tok.encode("low") == std::vector<int64_t>{512 + 1});
    CHECK(tok.encode("Lo") == std::vector<int64_t>{byte_id('l'), 256 + byte_id('o')});
    CHECK(tok.encode("!!") == std::vector<int64_t>{byte_id('!'), 256 + byte_id('!')});
    auto q = tok.tokenize("  LOW   low ", 8);
    CHECK(q.length == 4);
    CHECK(q.token_ids[1] == 513);
    CHECK(q.token_ids[2] == 513);
}

TEST_CASE("BPE: pre-tokenization splits like CLIP") {
    CHECK(BpeTokenizer::pretokenize("it's 42 cats!?") ==
          std::vector<std::string>{"it", "'s", "4", "2", "cats", "!?"});
    CHECK(BpeTokenizer::pretokenize("<|startoftext|>a b") == std::vector<std::string>{"<|startoftext|>", "a", "b"});
}

TEST_CASE("tokenizers reload from their serialized form") {
    auto bpe = BpeTokenizer::parse(kMerges);
    auto again = reload_tokenizer("bpe", bpe.serialize());
    CHECK(again->encode("lower arm") == bpe.encode("lower arm"));
    auto word = WordTokenizer::build({"a b c"});
    CHECK(reload_tokenizer("word", word.serialize())->encode("c b") == word.encode("c b"));
    CHECK_THROWS_AS(reload_tokenizer("sentencepiece", ""), UserError);
}

TEST_CASE("configured vocabulary size and context defaults") {
    const auto c = RunConfig{};
    CHECK(c.vocab_size == 49152);
    CHECK(c.max_text_len == 20);
}

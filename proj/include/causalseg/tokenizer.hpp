#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace causalseg {

struct SpecialTokens {
    int64_t pad = 0;
    int64_t sos = 1;
    int64_t eos = 2;
};

/// A tokenized referring expression, always exactly max_len ids long.
/// token_ids[0] is SOS, token_ids[length - 1] is EOS, the rest is padding.
struct TextQuery {
    std::string raw;
    std::vector<int64_t> token_ids;
    int64_t length = 0;
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    /// Body ids for `raw`, without sentinels.
    virtual std::vector<int64_t> encode(const std::string& raw) const = 0;
    virtual SpecialTokens specials() const = 0;
    virtual int64_t vocab_size() const = 0;
    virtual std::string kind() const = 0;
    /// Text form that reload_tokenizer() turns back into an equivalent tokenizer.
    virtual std::string serialize() const = 0;

    /// SOS + the first max_len - 2 body tokens + EOS, padded to max_len.
    TextQuery tokenize(const std::string& raw, int64_t max_len) const;
};

/// Lowercased whitespace/punctuation split over a closed vocabulary. Out of
/// vocabulary words map to the unk id.
class WordTokenizer final : public Tokenizer {
public:
    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kSos = "<sos>";
    static constexpr const char* kEos = "<eos>";
    static constexpr const char* kUnk = "<unk>";

    /// Vocabulary = the four specials followed by the words of `texts` in
    /// sorted order.
    static WordTokenizer build(const std::vector<std::string>& texts);
    /// Header line `#vocab pad=<id> sos=<id> eos=<id> unk=<id>`, then one
    /// token per line; a token's id is its line index after the header.
    static WordTokenizer parse(const std::string& text);
    static WordTokenizer load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    static std::vector<std::string> split_words(const std::string& raw);

    std::vector<int64_t> encode(const std::string& raw) const override;
    SpecialTokens specials() const override { return specials_; }
    int64_t vocab_size() const override { return static_cast<int64_t>(tokens_.size()); }
    std::string kind() const override { return "word"; }
    std::string serialize() const override;

    int64_t unk() const { return unk_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int64_t> index_;
    SpecialTokens specials_;
    int64_t unk_ = 3;
};

/// Byte-level BPE with CLIP's vocabulary layout: 256 byte symbols, the same
/// 256 with an end-of-word marker, one entry per merge, then
/// <|startoftext|> and <|endoftext|>. Pad id is 0 as in CLIP.
class BpeTokenizer final : public Tokenizer {
public:
    /// `merges_text` is a merges file: a version header line followed by
    /// "left right" pairs in rank order. At most nominal_vocab - 258 merges are
    /// read (48,894 for the 49,152-entry CLIP vocabulary).
    static BpeTokenizer parse(const std::string& merges_text, int64_t nominal_vocab = 49152);
    static BpeTokenizer load(const std::filesystem::path& merges_path, int64_t nominal_vocab = 49152);

    std::vector<int64_t> encode(const std::string& raw) const override;
    SpecialTokens specials() const override { return specials_; }
    int64_t vocab_size() const override { return static_cast<int64_t>(vocab_.size()); }
    std::string kind() const override { return "bpe"; }
    std::string serialize() const override;

    /// Splits text the way CLIP's regex does: contractions, letter runs,
    /// single digits, runs of other symbols.
    static std::vector<std::string> pretokenize(const std::string& lowered);
    std::vector<std::string> bpe(const std::string& piece) const;
    int64_t merge_count() const { return static_cast<int64_t>(ranks_.size()); }

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int64_t> index_;
    std::map<std::pair<std::string, std::string>, int64_t> ranks_;
    std::vector<std::string> byte_symbol_;  // byte -> unicode symbol (UTF-8)
    std::string merges_text_;
    int64_t nominal_vocab_ = 49152;
    SpecialTokens specials_;
};

std::unique_ptr<Tokenizer> reload_tokenizer(const std::string& kind, const std::string& serialized,
                                            int64_t nominal_vocab = 49152);

}  // namespace causalseg

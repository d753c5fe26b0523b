#include "causalseg/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "causalseg/errors.hpp"

namespace causalseg {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string utf8_encode(uint32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
}

// Decodes one code point at s[i]; invalid sequences decode as a single byte.
uint32_t utf8_next(const std::string& s, size_t& i) {
    auto b0 = static_cast<unsigned char>(s[i]);
    size_t n = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 1;
    if (i + n > s.size()) n = 1;
    uint32_t cp = n == 1 ? b0 : n == 2 ? (b0 & 0x1F) : n == 3 ? (b0 & 0x0F) : (b0 & 0x07);
    for (size_t k = 1; k < n; ++k) {
        auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            n = 1;
            cp = b0;
            break;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += n;
    return cp;
}

bool is_space(uint32_t cp) { return cp < 0x80 ? std::isspace(static_cast<int>(cp)) != 0 : cp == 0xA0 || cp == 0x3000; }
bool is_digit(uint32_t cp) { return cp >= '0' && cp <= '9'; }

// Approximation of \p{L}: ASCII letters plus non-ASCII code points outside the
// Latin-1 symbol block and the general punctuation block.
bool is_letter(uint32_t cp) {
    if (cp < 0x80) return std::isalpha(static_cast<int>(cp)) != 0;
    if (cp <= 0xBF || cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x206F) return false;
    return !is_space(cp);
}

std::string ascii_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Collapses whitespace runs and trims, as CLIP's whitespace_clean does.
std::string whitespace_clean(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += c;
        }
    }
    return out;
}

}  // namespace

TextQuery Tokenizer::tokenize(const std::string& raw, int64_t max_len) const {
    if (max_len < 2) throw UserError("max_len must be at least 2");
    const SpecialTokens sp = specials();
    std::vector<int64_t> body = encode(raw);

    TextQuery q;
    q.raw = raw;
    q.token_ids.reserve(static_cast<size_t>(max_len));
    q.token_ids.push_back(sp.sos);
    const auto keep_body = std::min<size_t>(body.size(), static_cast<size_t>(max_len - 2));
    q.token_ids.insert(q.token_ids.end(), body.begin(), body.begin() + static_cast<std::ptrdiff_t>(keep_body));
    q.token_ids.push_back(sp.eos);
    q.length = static_cast<int64_t>(q.token_ids.size());
    q.token_ids.resize(static_cast<size_t>(max_len), sp.pad);
    return q;
}

// ---------------------------------------------------------------------------
// WordTokenizer

std::vector<std::string> WordTokenizer::split_words(const std::string& raw) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : raw) {
        if (c >= 0x80 || std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

WordTokenizer WordTokenizer::build(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts)
        for (auto& w : split_words(t)) words.insert(std::move(w));
    std::ostringstream ss;
    ss << "#vocab pad=0 sos=1 eos=2 unk=3\n" << kPad << "\n" << kSos << "\n" << kEos << "\n" << kUnk << "\n";
    for (const auto& w : words) ss << w << "\n";
    return parse(ss.str());
}

WordTokenizer WordTokenizer::parse(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header) || header.rfind("#vocab", 0) != 0)
        throw UserError("vocabulary must start with a '#vocab pad=.. sos=.. eos=.. unk=..' header");

    WordTokenizer tok;
    std::map<std::string, int64_t> ids;
    std::istringstream hs(header.substr(6));
    std::string field;
    while (hs >> field) {
        auto eq = field.find('=');
        if (eq == std::string::npos) throw UserError("malformed vocabulary header field '" + field + "'");
        try {
            ids[field.substr(0, eq)] = std::stoll(field.substr(eq + 1));
        } catch (const std::exception&) {
            throw UserError("malformed vocabulary header field '" + field + "'");
        }
    }
    for (const char* key : {"pad", "sos", "eos", "unk"})
        if (!ids.count(key)) throw UserError(std::string("vocabulary header lacks '") + key + "'");

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tok.index_.emplace(line, static_cast<int64_t>(tok.tokens_.size()));
        tok.tokens_.push_back(line);
    }
    const auto n = static_cast<int64_t>(tok.tokens_.size());
    for (const auto& [key, id] : ids)
        if (id < 0 || id >= n) throw UserError("vocabulary header id " + key + " out of range");
    tok.specials_ = {ids["pad"], ids["sos"], ids["eos"]};
    tok.unk_ = ids["unk"];
    return tok;
}

WordTokenizer WordTokenizer::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void WordTokenizer::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
    out << serialize();
}

std::string WordTokenizer::serialize() const {
    std::ostringstream ss;
    ss << "#vocab pad=" << specials_.pad << " sos=" << specials_.sos << " eos=" << specials_.eos
       << " unk=" << unk_ << "\n";
    for (const auto& t : tokens_) ss << t << "\n";
    return ss.str();
}

std::vector<int64_t> WordTokenizer::encode(const std::string& raw) const {
    std::vector<int64_t> ids;
    for (const auto& w : split_words(raw)) {
        auto it = index_.find(w);
        ids.push_back(it == index_.end() ? unk_ : it->second);
    }
    return ids;
}

// ---------------------------------------------------------------------------
// BpeTokenizer

BpeTokenizer BpeTokenizer::parse(const std::string& merges_text, int64_t nominal_vocab) {
    if (nominal_vocab <= 258) throw UserError("BPE vocabulary must exceed 258 entries");
    BpeTokenizer tok;
    tok.nominal_vocab_ = nominal_vocab;

    // GPT-2 / CLIP byte -> unicode table; printable bytes map to themselves.
    std::vector<int> bs;
    for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
    std::vector<uint32_t> cs(bs.begin(), bs.end());
    uint32_t extra = 0;
    for (int b = 0; b < 256; ++b) {
        if (std::find(bs.begin(), bs.end(), b) == bs.end()) {
            bs.push_back(b);
            cs.push_back(256 + extra++);
        }
    }
    tok.byte_symbol_.assign(256, {});
    for (size_t i = 0; i < bs.size(); ++i) tok.byte_symbol_[static_cast<size_t>(bs[i])] = utf8_encode(cs[i]);

    for (uint32_t c : cs) tok.vocab_.push_back(utf8_encode(c));
    for (uint32_t c : cs) tok.vocab_.push_back(utf8_encode(c) + "</w>");

    const int64_t max_merges = nominal_vocab - 256 - 2;
    std::istringstream in(merges_text);
    std::string line;
    std::getline(in, line);  // version header
    std::ostringstream kept;
    kept << line << "\n";
    int64_t rank = 0;
    while (rank < max_merges && std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto sp = line.find(' ');
        if (sp == std::string::npos) throw UserError("malformed BPE merge line '" + line + "'");
        std::string left = line.substr(0, sp), right = line.substr(sp + 1);
        tok.ranks_.emplace(std::make_pair(left, right), rank++);
        tok.vocab_.push_back(left + right);
        kept << line << "\n";
    }
    tok.merges_text_ = kept.str();

    tok.vocab_.emplace_back("<|startoftext|>");
    tok.vocab_.emplace_back("<|endoftext|>");
    for (size_t i = 0; i < tok.vocab_.size(); ++i) tok.index_.emplace(tok.vocab_[i], static_cast<int64_t>(i));
    const auto n = static_cast<int64_t>(tok.vocab_.size());
    tok.specials_ = {0, n - 2, n - 1};
    return tok;
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& merges_path, int64_t nominal_vocab) {
    return parse(read_file(merges_path), nominal_vocab);
}

std::string BpeTokenizer::serialize() const { return merges_text_; }

std::vector<std::string> BpeTokenizer::pretokenize(const std::string& text) {
    static const char* const kSpecial[] = {"<|startoftext|>", "<|endoftext|>"};
    static const char* const kContractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};

    std::vector<std::string> pieces;
    size_t i = 0;
    while (i < text.size()) {
        size_t j = i;
        uint32_t cp = utf8_next(text, j);
        if (is_space(cp)) {
            i = j;
            continue;
        }
        bool matched = false;
        for (const char* s : kSpecial) {
            if (text.compare(i, std::char_traits<char>::length(s), s) == 0) {
                pieces.emplace_back(s);
                i += std::char_traits<char>::length(s);
                matched = true;
                break;
            }
        }
        if (!matched && text[i] == '\'') {
            for (const char* s : kContractions) {
                if (text.compare(i, std::char_traits<char>::length(s), s) == 0) {
                    pieces.emplace_back(s);
                    i += std::char_traits<char>::length(s);
                    matched = true;
                    break;
                }
            }
        }
        if (matched) continue;

        if (is_digit(cp)) {
            pieces.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        const bool letters = is_letter(cp);
        size_t end = j;
        while (end < text.size()) {
            size_t k = end;
            uint32_t next = utf8_next(text, k);
            const bool same = letters ? is_letter(next) : !(is_space(next) || is_letter(next) || is_digit(next));
            if (!same) break;
            end = k;
        }
        pieces.push_back(text.substr(i, end - i));
        i = end;
    }
    return pieces;
}

std::vector<std::string> BpeTokenizer::bpe(const std::string& piece) const {
    std::vector<std::string> word;
    for (unsigned char b : piece) word.push_back(byte_symbol_[b]);
    if (word.empty()) return word;
    word.back() += "</w>";

    while (word.size() > 1) {
        int64_t best_rank = std::numeric_limits<int64_t>::max();
        std::pair<std::string, std::string> best;
        for (size_t k = 0; k + 1 < word.size(); ++k) {
            auto it = ranks_.find({word[k], word[k + 1]});
            if (it != ranks_.end() && it->second < best_rank) {
                best_rank = it->second;
                best = it->first;
            }
        }
        if (best_rank == std::numeric_limits<int64_t>::max()) break;
        std::vector<std::string> merged;
        for (size_t k = 0; k < word.size();) {
            if (k + 1 < word.size() && word[k] == best.first && word[k + 1] == best.second) {
                merged.push_back(best.first + best.second);
                k += 2;
            } else {
                merged.push_back(word[k]);
                ++k;
            }
        }
        word = std::move(merged);
    }
    return word;
}

std::vector<int64_t> BpeTokenizer::encode(const std::string& raw) const {
    std::vector<int64_t> ids;
    for (const auto& piece : pretokenize(ascii_lower(whitespace_clean(raw)))) {
        if (piece == "<|startoftext|>" || piece == "<|endoftext|>") {
            ids.push_back(index_.at(piece));
            continue;
        }
        for (const auto& sym : bpe(piece)) ids.push_back(index_.at(sym));
    }
    return ids;
}

std::unique_ptr<Tokenizer> reload_tokenizer(const std::string& kind, const std::string& serialized,
                                            int64_t nominal_vocab) {
    if (kind == "word") return std::make_unique<WordTokenizer>(WordTokenizer::parse(serialized));
    if (kind == "bpe") return std::make_unique<BpeTokenizer>(BpeTokenizer::parse(serialized, nominal_vocab));
    throw UserError("unknown tokenizer kind '" + kind + "'");
}

}  // namespace causalseg

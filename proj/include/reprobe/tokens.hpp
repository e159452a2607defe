#pragma once

#include "reprobe/errors.hpp"
#include "reprobe/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reprobe {

using TokenId = std::uint32_t;

// A named token id space. Immutable after construction; share freely across
// threads. Probes work purely over ids, so a Vocab does not need display text
// unless something downstream wants to render or tokenize.
class Vocab {
public:
    static std::shared_ptr<const Vocab> create(std::string name, std::uint32_t size,
                                               std::vector<TokenId> special_ids = {},
                                               std::unordered_map<TokenId, std::string> id_to_text = {}) {
        if (size == 0) {
            throw std::invalid_argument("Vocab: size must be positive");
        }
        std::sort(special_ids.begin(), special_ids.end());
        special_ids.erase(std::unique(special_ids.begin(), special_ids.end()), special_ids.end());
        for (TokenId id : special_ids) {
            if (id >= size) {
                throw std::invalid_argument("Vocab: special id " + std::to_string(id) + " out of range");
            }
        }
        for (const auto& [id, text] : id_to_text) {
            if (id >= size) {
                throw std::invalid_argument("Vocab: mapped id " + std::to_string(id) + " out of range");
            }
        }
        auto v = std::shared_ptr<Vocab>(new Vocab());
        v->name_ = std::move(name);
        v->size_ = size;
        v->special_ids_ = std::move(special_ids);
        v->id_to_text_ = std::move(id_to_text);
        v->non_special_ids_.reserve(size - v->special_ids_.size());
        for (TokenId id = 0; id < size; ++id) {
            if (!v->is_special(id)) {
                v->non_special_ids_.push_back(id);
            }
        }
        return v;
    }

    const std::string& name() const noexcept { return name_; }
    std::uint32_t size() const noexcept { return size_; }
    const std::vector<TokenId>& special_ids() const noexcept { return special_ids_; }
    const std::vector<TokenId>& non_special_ids() const noexcept { return non_special_ids_; }
    std::size_t non_special_count() const noexcept { return non_special_ids_.size(); }

    bool is_special(TokenId id) const noexcept {
        return std::binary_search(special_ids_.begin(), special_ids_.end(), id);
    }

    std::optional<std::string> text_of(TokenId id) const {
        auto it = id_to_text_.find(id);
        if (it == id_to_text_.end()) return std::nullopt;
        return it->second;
    }

    const std::unordered_map<TokenId, std::string>& id_to_text() const noexcept { return id_to_text_; }

    // First non-special id whose display text is "\n", if any. Copy separators
    // use it when the vocab can express one.
    std::optional<TokenId> newline_token() const {
        std::optional<TokenId> best;
        for (const auto& [id, text] : id_to_text_) {
            if (text == "\n" && !is_special(id) && (!best || id < *best)) {
                best = id;
            }
        }
        return best;
    }

private:
    Vocab() = default;

    std::string name_;
    std::uint32_t size_ = 0;
    std::vector<TokenId> special_ids_;
    std::vector<TokenId> non_special_ids_;
    std::unordered_map<TokenId, std::string> id_to_text_;
};

using VocabPtr = std::shared_ptr<const Vocab>;

inline bool same_vocab(const VocabPtr& a, const VocabPtr& b) {
    return a == b || (a && b && a->name() == b->name() && a->size() == b->size());
}

// An immutable id sequence bound to its vocab. Construction validates every
// id, so downstream code can index without checks.
class TokenSeq {
public:
    TokenSeq() = default;

    TokenSeq(VocabPtr vocab, std::vector<TokenId> ids) : vocab_(std::move(vocab)), ids_(std::move(ids)) {
        if (!vocab_) {
            throw std::invalid_argument("TokenSeq: null vocab");
        }
        for (TokenId id : ids_) {
            if (id >= vocab_->size()) {
                throw std::invalid_argument("TokenSeq: id " + std::to_string(id) + " out of range for vocab '" +
                                            vocab_->name() + "'");
            }
        }
    }

    const VocabPtr& vocab() const noexcept { return vocab_; }
    const std::vector<TokenId>& ids() const noexcept { return ids_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    TokenId operator[](std::size_t i) const noexcept { return ids_[i]; }

    bool operator==(const TokenSeq& other) const {
        return ids_ == other.ids_ && same_vocab(vocab_, other.vocab_);
    }

private:
    VocabPtr vocab_;
    std::vector<TokenId> ids_;
};

inline TokenSeq concat(const TokenSeq& a, const TokenSeq& b) {
    if (!same_vocab(a.vocab(), b.vocab())) {
        throw std::invalid_argument("concat: vocab mismatch");
    }
    std::vector<TokenId> ids = a.ids();
    ids.insert(ids.end(), b.ids().begin(), b.ids().end());
    return TokenSeq(a.vocab(), std::move(ids));
}

// text -> ids. Implementations must be pure functions of the input text and
// safe for concurrent calls.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual const VocabPtr& vocab() const = 0;
    virtual TokenSeq tokenize(std::string_view text) const = 0;
    virtual std::string detokenize(const TokenSeq& seq) const = 0;
};

inline TokenSeq tokenize(std::string_view text, const Tokenizer& tokenizer) {
    return tokenizer.tokenize(text);
}

// Splits on ASCII whitespace and looks each word up in a fixed word->id map.
// Unknown words and empty input are errors; detokenize joins with single
// spaces, so tokenize(detokenize(tokenize(t))) == tokenize(t).
class WhitespaceTokenizer final : public Tokenizer {
public:
    explicit WhitespaceTokenizer(VocabPtr vocab) : vocab_(std::move(vocab)) {
        if (!vocab_) throw std::invalid_argument("WhitespaceTokenizer: null vocab");
        for (const auto& [id, text] : vocab_->id_to_text()) {
            auto [it, inserted] = word_to_id_.emplace(text, id);
            if (!inserted) {
                throw std::invalid_argument("WhitespaceTokenizer: duplicate word '" + text + "' in vocab");
            }
        }
    }

    // Builds a vocab from the distinct whitespace-separated words of the given
    // texts plus any extra words, ids assigned in first-seen order.
    static std::shared_ptr<WhitespaceTokenizer> build(const std::vector<std::string>& texts,
                                                      const std::vector<std::string>& extra_words = {},
                                                      const std::string& vocab_name = "words") {
        std::vector<std::string> words;
        std::unordered_map<std::string, TokenId> seen;
        auto add = [&](const std::string& w) {
            if (!w.empty() && seen.emplace(w, static_cast<TokenId>(words.size())).second) {
                words.push_back(w);
            }
        };
        for (const auto& text : texts) {
            std::istringstream ss{text};
            std::string w;
            while (ss >> w) add(w);
        }
        for (const auto& w : extra_words) add(w);
        std::unordered_map<TokenId, std::string> id_to_text;
        for (TokenId id = 0; id < words.size(); ++id) {
            id_to_text.emplace(id, words[id]);
        }
        auto vocab = Vocab::create(vocab_name, static_cast<std::uint32_t>(words.size()), {}, std::move(id_to_text));
        return std::make_shared<WhitespaceTokenizer>(std::move(vocab));
    }

    const VocabPtr& vocab() const override { return vocab_; }

    TokenSeq tokenize(std::string_view text) const override {
        std::istringstream ss{std::string(text)};
        std::vector<TokenId> ids;
        std::string word;
        while (ss >> word) {
            auto it = word_to_id_.find(word);
            if (it == word_to_id_.end()) {
                throw DataError("WhitespaceTokenizer: word '" + word + "' not in vocab '" + vocab_->name() + "'");
            }
            ids.push_back(it->second);
        }
        if (ids.empty()) {
            throw DataError("WhitespaceTokenizer: empty input");
        }
        return TokenSeq(vocab_, std::move(ids));
    }

    std::string detokenize(const TokenSeq& seq) const override {
        std::string out;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            auto text = vocab_->text_of(seq[i]);
            if (!text) {
                throw DataError("WhitespaceTokenizer: id " + std::to_string(seq[i]) + " has no text");
            }
            if (i) out += ' ';
            out += *text;
        }
        return out;
    }

private:
    VocabPtr vocab_;
    std::unordered_map<std::string, TokenId> word_to_id_;
};

// One token per byte, vocab size 256. Never fails; "" maps to the empty
// sequence. Round-trips exactly.
class ByteTokenizer final : public Tokenizer {
public:
    ByteTokenizer() {
        std::unordered_map<TokenId, std::string> id_to_text;
        for (unsigned b = 0; b < 256; ++b) {
            id_to_text.emplace(static_cast<TokenId>(b), std::string(1, static_cast<char>(b)));
        }
        vocab_ = Vocab::create("bytes", 256, {}, std::move(id_to_text));
    }

    const VocabPtr& vocab() const override { return vocab_; }

    TokenSeq tokenize(std::string_view text) const override {
        std::vector<TokenId> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) {
            ids.push_back(static_cast<TokenId>(c));
        }
        return TokenSeq(vocab_, std::move(ids));
    }

    std::string detokenize(const TokenSeq& seq) const override {
        std::string out;
        out.reserve(seq.size());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(seq[i])));
        }
        return out;
    }

private:
    VocabPtr vocab_;
};

// Uniform random sentence: length uniform in [min_len, max_len], each token
// uniform over non-special ids. Same seed, same sentence.
inline TokenSeq random_sentence(const VocabPtr& vocab, std::size_t min_len, std::size_t max_len,
                                std::uint64_t seed) {
    if (min_len < 1 || min_len > max_len) {
        throw std::invalid_argument("random_sentence: need 1 <= min_len <= max_len");
    }
    const auto& pool = vocab->non_special_ids();
    if (pool.empty()) {
        throw std::invalid_argument("random_sentence: vocab '" + vocab->name() + "' has no non-special tokens");
    }
    SplitMix64 rng(seed);
    const std::size_t len = min_len + static_cast<std::size_t>(rng.below(max_len - min_len + 1));
    std::vector<TokenId> ids;
    ids.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        ids.push_back(pool[rng.below(pool.size())]);
    }
    return TokenSeq(vocab, std::move(ids));
}

namespace detail {

inline VocabPtr load_vocab_json(std::istream& in, const std::string& name) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("vocab file '" + name + "': " + e.what());
    }
    if (!j.is_object() || !j.contains("size")) {
        throw DataError("vocab file '" + name + "': expected object with \"size\"");
    }
    const auto size = j.at("size").get<std::uint32_t>();
    std::vector<TokenId> specials;
    if (j.contains("special_ids")) {
        specials = j.at("special_ids").get<std::vector<TokenId>>();
    }
    std::unordered_map<TokenId, std::string> id_to_text;
    std::vector<bool> used(size, false);
    if (j.contains("tokens")) {
        for (const auto& [text, idj] : j.at("tokens").items()) {
            const auto id = idj.get<TokenId>();
            if (id >= size) {
                throw DataError("vocab file '" + name + "': token id " + std::to_string(id) + " out of range");
            }
            if (used[id]) {
                throw DataError("vocab file '" + name + "': duplicate token id " + std::to_string(id));
            }
            used[id] = true;
            id_to_text.emplace(id, text);
        }
    }
    try {
        return Vocab::create(name, size, std::move(specials), std::move(id_to_text));
    } catch (const std::invalid_argument& e) {
        throw DataError("vocab file '" + name + "': " + e.what());
    }
}

inline VocabPtr load_vocab_lines(std::istream& in, const std::string& name) {
    std::vector<TokenId> specials;
    std::vector<std::string> words;
    std::unordered_map<std::string, TokenId> seen;
    std::string line;
    bool in_header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (in_header && !line.empty() && line[0] == '#') {
            std::istringstream ss{line.substr(1)};
            std::string key;
            ss >> key;
            if (key == "special") {
                TokenId id;
                while (ss >> id) specials.push_back(id);
            }
            continue; // other # lines in the header are comments
        }
        in_header = false;
        if (line.empty()) continue;
        if (!seen.emplace(line, static_cast<TokenId>(words.size())).second) {
            throw DataError("vocab file '" + name + "': duplicate token '" + line + "'");
        }
        words.push_back(line);
    }
    std::unordered_map<TokenId, std::string> id_to_text;
    for (TokenId id = 0; id < words.size(); ++id) {
        id_to_text.emplace(id, words[id]);
    }
    try {
        return Vocab::create(name, static_cast<std::uint32_t>(words.size()), std::move(specials),
                             std::move(id_to_text));
    } catch (const std::invalid_argument& e) {
        throw DataError("vocab file '" + name + "': " + e.what());
    }
}

} // namespace detail

// Vocab files: "*.json" holds {"size":N,"special_ids":[...],"tokens":{"text":id}};
// anything else is line-per-token UTF-8 where leading "#special <id>..." header
// lines declare special ids and the remaining lines are token texts in id order.
inline VocabPtr load_external_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("vocab file '" + path + "': cannot open");
    }
    const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    return json ? detail::load_vocab_json(in, path) : detail::load_vocab_lines(in, path);
}

inline TokenSeq default_separator(const VocabPtr& vocab) {
    if (auto nl = vocab->newline_token()) {
        return TokenSeq(vocab, {*nl});
    }
    return TokenSeq(vocab, {});
}

} // namespace reprobe

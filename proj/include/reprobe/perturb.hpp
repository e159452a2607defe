#pragma once

#include "reprobe/rng.hpp"
#include "reprobe/tokens.hpp"

#include <json.hpp>

#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace reprobe {

// Binary keep/replace pattern over a sentence. keep[i] == 1 means position i
// carries the source token in every copy; 0 means it is resampled per copy.
struct MaskSpec {
    std::vector<std::uint8_t> keep;

    std::size_t length() const noexcept { return keep.size(); }

    std::size_t kept_count() const noexcept {
        return static_cast<std::size_t>(std::accumulate(keep.begin(), keep.end(), std::size_t{0}));
    }

    std::vector<std::size_t> kept_positions() const {
        std::vector<std::size_t> pos;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i]) pos.push_back(i);
        }
        return pos;
    }
};

inline MaskSpec all_ones_mask(std::size_t length) {
    return MaskSpec{std::vector<std::uint8_t>(length, 1)};
}

// Exactly kept_count ones at uniformly chosen positions (uniform over all
// C(length, kept_count) subsets via partial Fisher-Yates).
inline MaskSpec sample_mask(std::size_t length, std::size_t kept_count, std::uint64_t seed) {
    if (kept_count < 1 || kept_count > length) {
        throw std::invalid_argument("sample_mask: need 1 <= kept_count <= length");
    }
    std::vector<std::size_t> idx(length);
    std::iota(idx.begin(), idx.end(), 0);
    SplitMix64 rng(seed);
    MaskSpec mask{std::vector<std::uint8_t>(length, 0)};
    for (std::size_t i = 0; i < kept_count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(length - i));
        std::swap(idx[i], idx[j]);
        mask.keep[idx[i]] = 1;
    }
    return mask;
}

// Two kept positions j < k with exactly `distance` replaced tokens between
// them (k - j - 1 == distance); j uniform over the feasible slots.
inline MaskSpec pair_mask(std::size_t length, std::size_t distance, std::uint64_t seed) {
    if (length < distance + 2) {
        throw std::invalid_argument("pair_mask: length must be >= distance + 2");
    }
    SplitMix64 rng(seed);
    const std::size_t slots = length - distance - 1;
    const std::size_t j = static_cast<std::size_t>(rng.below(slots));
    MaskSpec mask{std::vector<std::uint8_t>(length, 0)};
    mask.keep[j] = 1;
    mask.keep[j + distance + 1] = 1;
    return mask;
}

// Last phrase_len positions kept, everything before them replaced.
inline MaskSpec suffix_mask(std::size_t length, std::size_t phrase_len) {
    if (phrase_len < 1 || phrase_len > length) {
        throw std::invalid_argument("suffix_mask: need 1 <= phrase_len <= length");
    }
    MaskSpec mask{std::vector<std::uint8_t>(length, 0)};
    for (std::size_t i = length - phrase_len; i < length; ++i) {
        mask.keep[i] = 1;
    }
    return mask;
}

// A repeated/perturbed context: prefix, then n same-length copies joined by
// the separator. Kept positions carry identical ids in every copy; replaced
// positions are fresh draws per copy and position. The scored copy is
// target_copy_index (the last copy unless stated otherwise).
struct ProbeSuite {
    TokenSeq prefix;
    std::vector<TokenSeq> copies;
    TokenSeq separator;
    std::vector<std::size_t> kept_positions;
    std::size_t target_copy_index = 0;
    std::uint64_t seed = 0; // lineage: root of the perturbation stream

    std::size_t copy_length() const noexcept { return copies.empty() ? 0 : copies.front().size(); }

    // Flat layout: prefix [sep] copy0 sep copy1 ... sep copy{n-1}. The
    // separator also follows a nonempty prefix.
    std::size_t copy_offset(std::size_t copy_index) const {
        const std::size_t sep = separator.size();
        std::size_t off = prefix.size();
        if (prefix.size() > 0 && !copies.empty()) off += sep;
        return off + copy_index * (copy_length() + sep);
    }

    TokenSeq full_context() const {
        std::vector<TokenId> ids;
        ids.reserve(copy_offset(copies.size()));
        auto append = [&ids](const TokenSeq& seq) {
            ids.insert(ids.end(), seq.ids().begin(), seq.ids().end());
        };
        append(prefix);
        for (std::size_t c = 0; c < copies.size(); ++c) {
            if (c > 0 || prefix.size() > 0) append(separator);
            append(copies[c]);
        }
        const VocabPtr& vocab = copies.empty() ? prefix.vocab() : copies.front().vocab();
        return TokenSeq(vocab, std::move(ids));
    }

    // Flat positions of the kept tokens inside the target copy.
    std::vector<std::size_t> target_positions() const {
        const std::size_t off = copy_offset(target_copy_index);
        std::vector<std::size_t> pos;
        pos.reserve(kept_positions.size());
        for (std::size_t p : kept_positions) {
            pos.push_back(off + p);
        }
        return pos;
    }
};

// n identical copies of s (full mask), scored at the last copy.
inline ProbeSuite build_repeated_context(const TokenSeq& s, std::size_t n, const TokenSeq& prefix,
                                         const TokenSeq& separator) {
    if (n < 1) {
        throw std::invalid_argument("build_repeated_context: n must be >= 1");
    }
    if (s.empty()) {
        throw std::invalid_argument("build_repeated_context: empty sentence");
    }
    ProbeSuite suite;
    suite.prefix = prefix;
    suite.separator = separator;
    suite.copies.assign(n, s);
    suite.kept_positions = all_ones_mask(s.size()).kept_positions();
    suite.target_copy_index = n - 1;
    return suite;
}

namespace detail {

inline TokenSeq perturb_copy(const TokenSeq& s, const MaskSpec& mask, SplitMix64& rng) {
    const auto& pool = s.vocab()->non_special_ids();
    std::vector<TokenId> ids(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        ids[i] = mask.keep[i] ? s[i] : pool[rng.below(pool.size())];
    }
    return TokenSeq(s.vocab(), std::move(ids));
}

} // namespace detail

// Nested family sharing one perturbation stream: the suite for n copies is the
// first n copies of the suite for max_n. Copies are generated copy-major, so
// build_perturbed_suite(s, mask, n, seed, ...) equals family[n-1] for any
// max_n >= n under the same seed.
inline std::vector<ProbeSuite> build_perturbed_family(const TokenSeq& s, const MaskSpec& mask,
                                                      std::size_t max_n, std::uint64_t seed,
                                                      const TokenSeq& prefix, const TokenSeq& separator) {
    if (mask.length() != s.size()) {
        throw std::invalid_argument("build_perturbed_family: mask length != sentence length");
    }
    if (max_n < 1) {
        throw std::invalid_argument("build_perturbed_family: n must be >= 1");
    }
    if (mask.kept_count() < 1) {
        throw std::invalid_argument("build_perturbed_family: mask must keep at least one position");
    }
    const bool resamples = mask.kept_count() < mask.length();
    if (resamples && s.vocab()->non_special_count() < 2) {
        throw std::invalid_argument("build_perturbed_family: vocab too small to resample replaced positions");
    }

    std::vector<TokenSeq> copies;
    copies.reserve(max_n);
    for (std::size_t c = 0; c < max_n; ++c) {
        SplitMix64 rng(derive_seed(seed, c));
        copies.push_back(detail::perturb_copy(s, mask, rng));
    }

    const auto kept = mask.kept_positions();
    std::vector<ProbeSuite> family;
    family.reserve(max_n);
    for (std::size_t n = 1; n <= max_n; ++n) {
        ProbeSuite suite;
        suite.prefix = prefix;
        suite.separator = separator;
        suite.copies.assign(copies.begin(), copies.begin() + static_cast<std::ptrdiff_t>(n));
        suite.kept_positions = kept;
        suite.target_copy_index = n - 1;
        suite.seed = seed;
        family.push_back(std::move(suite));
    }
    return family;
}

inline ProbeSuite build_perturbed_suite(const TokenSeq& s, const MaskSpec& mask, std::size_t n,
                                        std::uint64_t seed, const TokenSeq& prefix,
                                        const TokenSeq& separator) {
    auto family = build_perturbed_family(s, mask, n, seed, prefix, separator);
    return std::move(family.back());
}

// Semantic pair strategies for the two kept tokens.
struct PairStrategy {
    enum class Kind { random_pair, identical_pair, embedding_similar_pair };

    Kind kind = Kind::random_pair;
    std::vector<std::vector<double>> embedding; // vocab.size rows when embedding_similar_pair
};

namespace detail {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return -1.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace detail

inline std::pair<TokenId, TokenId> sample_pair(const PairStrategy& strategy, const Vocab& vocab,
                                               std::uint64_t seed) {
    const auto& pool = vocab.non_special_ids();
    if (pool.empty()) {
        throw std::invalid_argument("sample_pair: vocab has no non-special tokens");
    }
    SplitMix64 rng(seed);
    switch (strategy.kind) {
    case PairStrategy::Kind::random_pair:
        return {pool[rng.below(pool.size())], pool[rng.below(pool.size())]};
    case PairStrategy::Kind::identical_pair: {
        const TokenId t = pool[rng.below(pool.size())];
        return {t, t};
    }
    case PairStrategy::Kind::embedding_similar_pair: {
        if (strategy.embedding.size() < vocab.size()) {
            throw std::invalid_argument("sample_pair: embedding table missing or smaller than vocab");
        }
        const TokenId anchor = pool[rng.below(pool.size())];
        TokenId best = anchor;
        double best_sim = -2.0;
        for (TokenId cand : pool) {
            if (cand == anchor) continue;
            const double sim = detail::cosine(strategy.embedding[anchor], strategy.embedding[cand]);
            if (sim > best_sim || (sim == best_sim && cand < best)) {
                best_sim = sim;
                best = cand;
            }
        }
        if (best == anchor) {
            throw std::invalid_argument("sample_pair: no non-identical partner available");
        }
        return {anchor, best};
    }
    }
    throw std::invalid_argument("sample_pair: unknown strategy");
}

// JSONL replay format: one suite per line with ids only, resolved against a
// caller-supplied vocab on read.
inline void write_suites_jsonl(std::ostream& out, std::span<const ProbeSuite> suites) {
    for (const auto& suite : suites) {
        nlohmann::json j;
        const VocabPtr& vocab = suite.copies.empty() ? suite.prefix.vocab() : suite.copies.front().vocab();
        j["vocab"] = vocab ? vocab->name() : "";
        j["prefix"] = suite.prefix.ids();
        j["separator"] = suite.separator.ids();
        j["copies"] = nlohmann::json::array();
        for (const auto& c : suite.copies) {
            j["copies"].push_back(c.ids());
        }
        j["kept_positions"] = suite.kept_positions;
        j["target_copy_index"] = suite.target_copy_index;
        j["seed"] = suite.seed;
        out << j.dump() << '\n';
    }
}

inline std::vector<ProbeSuite> read_suites_jsonl(std::istream& in, const VocabPtr& vocab) {
    std::vector<ProbeSuite> suites;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("suites jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        if (j.value("vocab", "") != vocab->name()) {
            throw DataError("suites jsonl line " + std::to_string(line_no) + ": vocab mismatch");
        }
        ProbeSuite suite;
        suite.prefix = TokenSeq(vocab, j.at("prefix").get<std::vector<TokenId>>());
        suite.separator = TokenSeq(vocab, j.at("separator").get<std::vector<TokenId>>());
        for (const auto& c : j.at("copies")) {
            suite.copies.emplace_back(vocab, c.get<std::vector<TokenId>>());
        }
        suite.kept_positions = j.at("kept_positions").get<std::vector<std::size_t>>();
        suite.target_copy_index = j.at("target_copy_index").get<std::size_t>();
        suite.seed = j.value("seed", std::uint64_t{0});
        suites.push_back(std::move(suite));
    }
    return suites;
}

} // namespace reprobe

#pragma once

#include "reprobe/metrics.hpp"
#include "reprobe/perturb.hpp"
#include "reprobe/tokens.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace reprobe {

// One (F_I, x, F_O, y) demonstration; concatenation order is fixed.
struct Demonstration {
    TokenSeq input_format;
    TokenSeq input;
    TokenSeq output_format;
    TokenSeq output;

    TokenSeq flat() const {
        return concat(concat(input_format, input), concat(output_format, output));
    }
};

// The test query: same shape minus the answer.
struct Query {
    TokenSeq input_format;
    TokenSeq input;
    TokenSeq output_format;

    TokenSeq flat() const { return concat(concat(input_format, input), output_format); }
};

// (F_I,x_1,F_O,y_1, ..., F_I,x,F_O) with the separator between demonstrations
// and before the query. Zero demonstrations gives the zero-shot query alone.
inline TokenSeq render(std::span<const Demonstration> demos, const Query& query,
                       const TokenSeq& separator) {
    TokenSeq out = TokenSeq(query.input_format.vocab(), {});
    for (const auto& demo : demos) {
        out = concat(concat(out, demo.flat()), separator);
    }
    return concat(out, query.flat());
}

inline TokenSeq render(std::span<const Demonstration> demos, const Query& query) {
    return render(demos, query, default_separator(query.input_format.vocab()));
}

// ---------------------------------------------------------------------------
// MMLU items and the formatting manipulations
// ---------------------------------------------------------------------------

struct MmluOption {
    std::string name;    // "A." .. "D." unless substituted
    std::string content; // answer text
};

// Five-part multiple-choice item: question content, option names, option
// contents, answer indicator, final answer (the gold label letter).
struct MmluItem {
    std::string question;
    std::array<MmluOption, 4> options;
    std::string answer_indicator = "Answer:";
    std::string pre_indicator_phrase; // inserted line before the indicator, "" = none
    Label gold = Label::A;
};

inline const std::array<std::string, 4>& default_option_names() {
    static const std::array<std::string, 4> names = {"A.", "B.", "C.", "D."};
    return names;
}

inline MmluItem make_mmlu_item(std::string question, std::array<std::string, 4> contents, Label gold) {
    MmluItem item;
    item.question = std::move(question);
    for (int i = 0; i < 4; ++i) {
        item.options[i] = {default_option_names()[i], std::move(contents[i])};
    }
    item.gold = gold;
    return item;
}

// Text form, one option per line, final answer as the bare label letter:
//   <question>
//   A. <content> ... D. <content>
//   [<phrase>]
//   Answer: <letter>
inline std::string render_mmlu(const MmluItem& item, bool include_answer) {
    std::string out = item.question;
    for (const auto& opt : item.options) {
        out += '\n';
        out += opt.name;
        out += ' ';
        out += opt.content;
    }
    if (!item.pre_indicator_phrase.empty()) {
        out += '\n';
        out += item.pre_indicator_phrase;
    }
    out += '\n';
    out += item.answer_indicator;
    if (include_answer) {
        out += ' ';
        out += label_char(item.gold);
    }
    return out;
}

// Demo block + blank line separators + answerless query.
inline std::string mmlu_run_text(std::span<const MmluItem> demos, const MmluItem& query) {
    std::string out;
    for (const auto& demo : demos) {
        out += render_mmlu(demo, true);
        out += "\n\n";
    }
    out += render_mmlu(query, false);
    return out;
}

inline std::vector<MmluItem> load_mmlu_jsonl(std::istream& in) {
    std::vector<MmluItem> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("mmlu jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.contains("question") || !j.contains("options") || !j.contains("gold")) {
            throw DataError("mmlu jsonl line " + std::to_string(line_no) +
                            ": need question, options, gold");
        }
        const auto options = j.at("options").get<std::vector<std::string>>();
        if (options.size() != 4) {
            throw DataError("mmlu jsonl line " + std::to_string(line_no) + ": need exactly 4 options");
        }
        MmluItem item = make_mmlu_item(j.at("question").get<std::string>(),
                                       {options[0], options[1], options[2], options[3]},
                                       label_from_string(j.at("gold").get<std::string>()));
        if (j.contains("answer_indicator")) {
            item.answer_indicator = j.at("answer_indicator").get<std::string>();
        }
        items.push_back(std::move(item));
    }
    return items;
}

// Re-emits the ingest schema plus a provenance object on every line.
inline void write_mmlu_jsonl(std::ostream& out, std::span<const MmluItem> items,
                             const nlohmann::json& provenance = {}) {
    for (const auto& item : items) {
        nlohmann::json j;
        j["question"] = item.question;
        j["options"] = {item.options[0].content, item.options[1].content, item.options[2].content,
                        item.options[3].content};
        j["gold"] = std::string(1, label_char(item.gold));
        if (item.answer_indicator != "Answer:") {
            j["answer_indicator"] = item.answer_indicator;
        }
        if (!provenance.is_null() && !provenance.empty()) {
            j["provenance"] = provenance;
        }
        out << j.dump() << '\n';
    }
}

namespace detail {

// Equal-token-length random replacement: tokenize, redraw every id from the
// non-special vocab, detokenize.
inline std::string randomize_text(const std::string& text, const Tokenizer& tok, SplitMix64& rng) {
    const auto seq = tok.tokenize(text);
    const auto& pool = seq.vocab()->non_special_ids();
    if (pool.empty()) {
        throw std::invalid_argument("randomize_text: vocab has no non-special tokens");
    }
    std::vector<TokenId> ids(seq.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = pool[rng.below(pool.size())];
    }
    return tok.detokenize(TokenSeq(seq.vocab(), std::move(ids)));
}

} // namespace detail

struct MmluMaskParts {
    bool question = false;
    bool option_content = false;
};

// Replaces the selected informative parts with random tokens of equal token
// length; formatting words, final answer, and everything unselected stay
// byte-identical.
inline MmluItem mask_mmlu_parts(const MmluItem& item, MmluMaskParts parts, const Tokenizer& tok,
                                std::uint64_t seed) {
    if (!parts.question && !parts.option_content) {
        throw std::invalid_argument("mask_mmlu_parts: no parts selected");
    }
    SplitMix64 rng(seed);
    MmluItem out = item;
    if (parts.question) {
        out.question = detail::randomize_text(item.question, tok, rng);
    }
    if (parts.option_content) {
        for (auto& opt : out.options) {
            opt.content = detail::randomize_text(opt.content, tok, rng);
        }
    }
    return out;
}

// Stock substitute pools for option names and answer indicators.
struct SubstitutePool {
    std::vector<std::array<std::string, 4>> option_name_sets;
    std::vector<std::string> answer_indicators;

    static SubstitutePool defaults() {
        SubstitutePool pool;
        pool.option_name_sets = {
            {"I.", "II.", "III.", "IV."},
            {"E.", "F.", "G.", "H."},
            {"1.", "2.", "3.", "4."},
            {"(a).", "(b).", "(c).", "(d)."},
        };
        pool.answer_indicators = {"Solution:", "Reply:", "Response:", "Result:", "Choice:"};
        return pool;
    }
};

enum class FormattingTarget { option_names, answer_indicator, both };

// One substitute choice per run, applied consistently to every demonstration.
// The test query is not passed through here, so it keeps the original form.
inline std::vector<MmluItem> substitute_formatting(std::vector<MmluItem> demos, FormattingTarget which,
                                                   const SubstitutePool& pool, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::optional<std::array<std::string, 4>> names;
    std::optional<std::string> indicator;
    if (which == FormattingTarget::option_names || which == FormattingTarget::both) {
        if (pool.option_name_sets.empty()) {
            throw std::invalid_argument("substitute_formatting: empty option-name pool");
        }
        names = pool.option_name_sets[rng.below(pool.option_name_sets.size())];
    }
    if (which == FormattingTarget::answer_indicator || which == FormattingTarget::both) {
        if (pool.answer_indicators.empty()) {
            throw std::invalid_argument("substitute_formatting: empty answer-indicator pool");
        }
        indicator = pool.answer_indicators[rng.below(pool.answer_indicators.size())];
    }
    for (auto& demo : demos) {
        if (names) {
            for (int i = 0; i < 4; ++i) {
                demo.options[i].name = (*names)[i];
            }
        }
        if (indicator) {
            demo.answer_indicator = *indicator;
        }
    }
    return demos;
}

inline const std::vector<std::string>& nc_phrase_pool() {
    static const std::vector<std::string> pool = {
        "Please kindly provide your answer.",
        "Looking forward to your choice.",
    };
    return pool;
}

struct MmluRun {
    std::vector<MmluItem> demos;
    MmluItem query;
};

// Inserts the phrase before the answer indicator in every demonstration whose
// gold label equals the target, and always in the test query.
inline MmluRun inject_noninformative(MmluRun run, const std::string& phrase, Label target) {
    if (phrase.empty()) {
        throw std::invalid_argument("inject_noninformative: empty phrase");
    }
    for (auto& demo : run.demos) {
        if (demo.gold == target) {
            demo.pre_indicator_phrase = phrase;
        }
    }
    run.query.pre_indicator_phrase = phrase;
    return run;
}

namespace detail {

// round-half-to-even on r*K
inline std::size_t reorder_quota(double ratio, std::size_t k) {
    return static_cast<std::size_t>(std::nearbyint(ratio * static_cast<double>(k)));
}

inline void retarget_gold(MmluItem& item, Label target) {
    if (item.gold == target) return;
    std::swap(item.options[static_cast<int>(item.gold)].content,
              item.options[static_cast<int>(target)].content);
    item.gold = target;
}

} // namespace detail

// Rewrites round(r*K) randomly chosen demonstrations so their gold answer is
// the target label, swapping the option contents of the original gold slot
// and the target slot to keep each demonstration valid. Chosen demos that
// already answer with the target consume quota unchanged.
inline std::vector<MmluItem> reorder_answers(std::vector<MmluItem> demos, double ratio, Label target,
                                             std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) {
        throw std::invalid_argument("reorder_answers: ratio must be in [0,1]");
    }
    const std::size_t quota = detail::reorder_quota(ratio, demos.size());
    std::vector<std::size_t> idx(demos.size());
    std::iota(idx.begin(), idx.end(), 0);
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < quota; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
        detail::retarget_gold(demos[idx[i]], target);
    }
    return demos;
}

struct BalancedSet {
    std::vector<MmluItem> items;
    std::size_t trimmed = 0; // dropped to reach a multiple of 4
};

// Random permutation, then gold labels forced to an exact 4-way split using
// the same content-swap mechanism as reorder_answers.
inline BalancedSet balance_test_set(std::vector<MmluItem> items, std::uint64_t seed) {
    BalancedSet out;
    out.trimmed = items.size() % 4;
    items.resize(items.size() - out.trimmed);
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i + 1 < items.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
        std::swap(items[i], items[j]);
    }
    std::vector<Label> assignment;
    assignment.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        assignment.push_back(static_cast<Label>(i % 4));
    }
    for (std::size_t i = 0; i + 1 < assignment.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(assignment.size() - i));
        std::swap(assignment[i], assignment[j]);
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        detail::retarget_gold(items[i], assignment[i]);
    }
    out.items = std::move(items);
    return out;
}

// ---------------------------------------------------------------------------
// GSM8K-style chain-of-thought probes
// ---------------------------------------------------------------------------

struct CotDemo {
    std::string question;
    std::string cot_answer;
};

inline std::vector<CotDemo> load_gsm8k_jsonl(std::istream& in) {
    std::vector<CotDemo> demos;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("gsm8k jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.contains("question") || !j.contains("cot_answer")) {
            throw DataError("gsm8k jsonl line " + std::to_string(line_no) +
                            ": need question, cot_answer");
        }
        demos.push_back({j.at("question").get<std::string>(), j.at("cot_answer").get<std::string>()});
    }
    return demos;
}

enum class CotPart { question_content, question_tag, newline_marker };

inline const std::string& cot_pattern_default() {
    static const std::string pattern = "Let's think step by step.";
    return pattern;
}

struct CotProbe {
    TokenSeq context;
    std::vector<std::size_t> pattern_positions; // flat positions in the query region

    std::size_t first_token_position() const {
        if (pattern_positions.empty()) {
            throw std::invalid_argument("CotProbe: empty pattern");
        }
        return pattern_positions.front();
    }
};

// Builds the context "Question: [Q] // <pattern> // [CoT answer]" per demo,
// demos joined by the marker, then the query "Question: [q] //" followed by
// the teacher-forced pattern tokens to score. The listed parts are replaced
// with equal-length random tokens in every demonstration; the query is never
// touched. "//" stands in for the newline marker at word level.
inline CotProbe cot_probe(std::span<const CotDemo> demos, const std::string& query_question,
                          std::span<const CotPart> mask_parts, const std::string& pattern,
                          const Tokenizer& tok, std::uint64_t seed) {
    if (pattern.empty()) {
        throw std::invalid_argument("cot_probe: empty pattern");
    }
    bool mask_question = false, mask_tag = false, mask_marker = false;
    for (CotPart part : mask_parts) {
        if (part == CotPart::question_content) mask_question = true;
        if (part == CotPart::question_tag) mask_tag = true;
        if (part == CotPart::newline_marker) mask_marker = true;
    }

    const TokenSeq tag = tok.tokenize("Question:");
    const TokenSeq marker = tok.tokenize("//");
    const TokenSeq pattern_seq = tok.tokenize(pattern);
    const VocabPtr& vocab = tok.vocab();

    SplitMix64 rng(seed);
    auto randomized = [&](const TokenSeq& seq) {
        const auto& pool = vocab->non_special_ids();
        std::vector<TokenId> ids(seq.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ids[i] = pool[rng.below(pool.size())];
        }
        return TokenSeq(vocab, std::move(ids));
    };

    std::vector<TokenId> ids;
    auto append = [&ids](const TokenSeq& seq) {
        ids.insert(ids.end(), seq.ids().begin(), seq.ids().end());
    };

    for (std::size_t d = 0; d < demos.size(); ++d) {
        const TokenSeq question = tok.tokenize(demos[d].question);
        const TokenSeq answer = tok.tokenize(demos[d].cot_answer);
        append(mask_tag ? randomized(tag) : tag);
        append(mask_question ? randomized(question) : question);
        append(mask_marker ? randomized(marker) : marker);
        append(pattern_seq);
        append(mask_marker ? randomized(marker) : marker);
        append(answer);
        append(mask_marker ? randomized(marker) : marker); // demo joiner
    }

    append(tag);
    append(tok.tokenize(query_question));
    append(marker);
    const std::size_t pattern_start = ids.size();
    append(pattern_seq);

    CotProbe probe;
    probe.context = TokenSeq(vocab, std::move(ids));
    for (std::size_t i = 0; i < pattern_seq.size(); ++i) {
        probe.pattern_positions.push_back(pattern_start + i);
    }
    return probe;
}

// ---------------------------------------------------------------------------
// Reinforcement ledger
// ---------------------------------------------------------------------------

// Pairwise connection tally across demonstrations: for every ordered pair
// (c, t) with c before t inside one demo, adjacent pairs count as successive
// and the rest as distant.
struct LedgerEntry {
    TokenId source = 0;
    TokenId target = 0;
    std::uint64_t successive_count = 0;
    std::uint64_t distant_count = 0;

    std::uint64_t total() const noexcept { return successive_count + distant_count; }
};

inline std::vector<LedgerEntry> ledger(std::span<const Demonstration> demos,
                                       std::size_t max_demo_len = 512) {
    if (demos.empty()) {
        throw std::invalid_argument("ledger: need at least one demonstration");
    }
    std::map<std::pair<TokenId, TokenId>, std::pair<std::uint64_t, std::uint64_t>> tally;
    for (const auto& demo : demos) {
        const auto flat = demo.flat();
        const std::size_t len = std::min(flat.size(), max_demo_len);
        for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t j = i + 1; j < len; ++j) {
                auto& cell = tally[{flat[i], flat[j]}];
                if (j == i + 1) {
                    ++cell.first;
                } else {
                    ++cell.second;
                }
            }
        }
    }
    std::vector<LedgerEntry> entries;
    entries.reserve(tally.size());
    for (const auto& [key, counts] : tally) {
        entries.push_back({key.first, key.second, counts.first, counts.second});
    }
    std::sort(entries.begin(), entries.end(), [](const LedgerEntry& a, const LedgerEntry& b) {
        if (a.total() != b.total()) return a.total() > b.total();
        if (a.source != b.source) return a.source < b.source;
        return a.target < b.target;
    });
    return entries;
}

} // namespace reprobe

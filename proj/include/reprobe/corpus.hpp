#pragma once

#include "reprobe/errors.hpp"
#include "reprobe/tokens.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace reprobe {

struct PnOptions {
    std::size_t window = 1024;  // context window T
    std::size_t max_n = 100;    // buckets beyond fold into overflow
    bool include_zero = false;  // opt-in n = 0, restricted to window-local types
};

// Recurrence statistic accumulator. For each window position i >= 1 and each
// n >= 1, trials[n] gains the number of distinct words whose count in the
// prefix w_<i equals n, and hits[n] gains 1 iff the actual word w_i had
// prefix count n. P_n = hits[n] / trials[n] is then the empirical chance that
// a word seen n times recurs.
//
// The trial sums are maintained lazily: dcount[n] (#distinct words at count n)
// changes at exactly two n per inserted token, so each bucket's contribution
// is flushed as dcount[n] * (ticks since the bucket last changed). That keeps
// the counting loop O(1) amortized per token.
class PnAccumulator {
public:
    explicit PnAccumulator(PnOptions opts = {}) : opts_(opts) {
        if (opts_.window < 2) {
            throw std::invalid_argument("PnAccumulator: window must be >= 2");
        }
        if (opts_.max_n < 1) {
            throw std::invalid_argument("PnAccumulator: max_n must be >= 1");
        }
        hits_.assign(opts_.max_n + 1, 0);
        trials_.assign(opts_.max_n + 1, 0);
    }

    const PnOptions& options() const noexcept { return opts_; }

    std::uint64_t hits(std::size_t n) const { return hits_.at(n); }
    std::uint64_t trials(std::size_t n) const { return trials_.at(n); }
    std::uint64_t overflow_hits() const noexcept { return overflow_hits_; }
    std::uint64_t overflow_trials() const noexcept { return overflow_trials_; }
    std::uint64_t zero_hits() const noexcept { return zero_hits_; }
    std::uint64_t zero_trials() const noexcept { return zero_trials_; }
    std::uint64_t tokens_seen() const noexcept { return tokens_seen_; }

    // Windows shorter than 2 tokens carry no (position, prefix) trials.
    void add_window(std::span<const TokenId> window) {
        tokens_seen_ += window.size();
        if (window.size() < 2) {
            return;
        }
        const std::size_t len = window.size();
        grow_scratch(window);

        ++epoch_;
        scratch_dcount_.assign(len + 2, 0);
        scratch_last_tick_.assign(len + 2, 0);
        scratch_trials_.assign(len + 2, 0);

        std::uint64_t tick = 0;
        std::size_t distinct_prefix = 0;
        std::size_t window_distinct = 0;
        if (opts_.include_zero) {
            // first pass: distinct types in the whole window
            ++zero_epoch_;
            for (TokenId w : window) {
                if (zero_seen_[w] != zero_epoch_) {
                    zero_seen_[w] = zero_epoch_;
                    ++window_distinct;
                }
            }
        }

        auto flush = [&](std::size_t n) {
            scratch_trials_[n] += scratch_dcount_[n] * (tick - scratch_last_tick_[n]);
            scratch_last_tick_[n] = tick;
        };

        for (std::size_t i = 0; i < len; ++i) {
            const TokenId w = window[i];
            const std::size_t prior = count_of(w);
            if (i >= 1) {
                ++tick;
                if (prior >= 1) {
                    bump_hit(prior);
                } else if (opts_.include_zero) {
                    ++zero_hits_;
                }
                if (opts_.include_zero) {
                    zero_trials_ += window_distinct - distinct_prefix;
                }
            }
            // insert w: dcount moves one unit from `prior` to `prior + 1`
            if (prior >= 1) {
                flush(prior);
                --scratch_dcount_[prior];
            } else {
                ++distinct_prefix;
            }
            flush(prior + 1);
            ++scratch_dcount_[prior + 1];
            set_count(w, prior + 1);
        }
        for (std::size_t n = 1; n <= len; ++n) {
            flush(n);
            if (scratch_trials_[n] > 0) {
                bump_trials(n, scratch_trials_[n]);
            }
        }
    }

    void merge(const PnAccumulator& other) {
        if (other.opts_.max_n != opts_.max_n || other.opts_.window != opts_.window ||
            other.opts_.include_zero != opts_.include_zero) {
            throw std::invalid_argument("PnAccumulator::merge: mismatched options");
        }
        for (std::size_t n = 1; n <= opts_.max_n; ++n) {
            hits_[n] += other.hits_[n];
            trials_[n] += other.trials_[n];
        }
        overflow_hits_ += other.overflow_hits_;
        overflow_trials_ += other.overflow_trials_;
        zero_hits_ += other.zero_hits_;
        zero_trials_ += other.zero_trials_;
        tokens_seen_ += other.tokens_seen_;
    }

private:
    void grow_scratch(std::span<const TokenId> window) {
        TokenId max_id = 0;
        for (TokenId w : window) max_id = std::max(max_id, w);
        if (counts_.size() <= max_id) {
            counts_.resize(max_id + 1, 0);
            stamps_.resize(max_id + 1, 0);
            zero_seen_.resize(max_id + 1, 0);
        }
    }

    std::size_t count_of(TokenId w) const { return stamps_[w] == epoch_ ? counts_[w] : 0; }

    void set_count(TokenId w, std::size_t c) {
        stamps_[w] = epoch_;
        counts_[w] = static_cast<std::uint32_t>(c);
    }

    void bump_hit(std::size_t n) {
        if (n <= opts_.max_n) {
            ++hits_[n];
        } else {
            ++overflow_hits_;
        }
    }

    void bump_trials(std::size_t n, std::uint64_t by) {
        if (n <= opts_.max_n) {
            trials_[n] += by;
        } else {
            overflow_trials_ += by;
        }
    }

    PnOptions opts_;
    std::vector<std::uint64_t> hits_, trials_; // index n in [1, max_n]
    std::uint64_t overflow_hits_ = 0, overflow_trials_ = 0;
    std::uint64_t zero_hits_ = 0, zero_trials_ = 0;
    std::uint64_t tokens_seen_ = 0;

    // per-window scratch, epoch-stamped so resets are O(distinct)
    std::vector<std::uint32_t> counts_, stamps_, zero_seen_;
    std::uint32_t epoch_ = 0, zero_epoch_ = 0;
    std::vector<std::uint64_t> scratch_dcount_, scratch_last_tick_, scratch_trials_;
};

inline void pn_window(std::span<const TokenId> window, PnAccumulator& acc) {
    acc.add_window(window);
}

// ---------------------------------------------------------------------------
// Binary token shards
// ---------------------------------------------------------------------------

// Layout: 8-byte magic "RPRBTOK1", u32 vocab-name length, name bytes,
// u64 token count, then little-endian u32 ids.
inline constexpr char kTokenFileMagic[8] = {'R', 'P', 'R', 'B', 'T', 'O', 'K', '1'};

struct CorpusShard {
    std::string path;
    std::string vocab_name;
    std::uint64_t token_count = 0;
};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError("token file '" + path + "': truncated");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& in, const std::string& path) {
    const std::uint64_t lo = read_u32(in, path);
    const std::uint64_t hi = read_u32(in, path);
    return lo | (hi << 32);
}

} // namespace detail

inline void write_token_file(const std::string& path, const std::string& vocab_name,
                             std::span<const TokenId> ids) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("token file '" + path + "': cannot open for writing");
    }
    out.write(kTokenFileMagic, sizeof(kTokenFileMagic));
    detail::write_u32(out, static_cast<std::uint32_t>(vocab_name.size()));
    out.write(vocab_name.data(), static_cast<std::streamsize>(vocab_name.size()));
    detail::write_u64(out, ids.size());
    for (TokenId id : ids) {
        detail::write_u32(out, id);
    }
    if (!out) {
        throw DataError("token file '" + path + "': write failed");
    }
}

// Header-only open; payload is streamed window by window during counting.
inline CorpusShard open_shard(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("token file '" + path + "': cannot open");
    }
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kTokenFileMagic, 8) != 0) {
        throw DataError("token file '" + path + "': bad magic");
    }
    const std::uint32_t name_len = detail::read_u32(in, path);
    if (name_len > 4096) {
        throw DataError("token file '" + path + "': implausible vocab name length");
    }
    std::string name(name_len, '\0');
    if (name_len && !in.read(name.data(), name_len)) {
        throw DataError("token file '" + path + "': truncated header");
    }
    CorpusShard shard;
    shard.path = path;
    shard.vocab_name = std::move(name);
    shard.token_count = detail::read_u64(in, path);
    return shard;
}

namespace detail {

inline std::size_t shard_header_bytes(const CorpusShard& shard) {
    return sizeof(kTokenFileMagic) + 4 + shard.vocab_name.size() + 8;
}

template <typename WindowFn>
void for_each_window(const CorpusShard& shard, std::size_t window, WindowFn&& fn) {
    std::ifstream in(shard.path, std::ios::binary);
    if (!in) {
        throw DataError("token file '" + shard.path + "': cannot open");
    }
    in.seekg(static_cast<std::streamoff>(shard_header_bytes(shard)));
    std::vector<unsigned char> raw(window * 4);
    std::vector<TokenId> ids(window);
    std::uint64_t remaining = shard.token_count;
    while (remaining > 0) {
        const std::size_t take = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, window));
        if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(take * 4))) {
            throw DataError("token file '" + shard.path + "': truncated payload");
        }
        for (std::size_t i = 0; i < take; ++i) {
            ids[i] = static_cast<TokenId>(raw[4 * i]) | (static_cast<TokenId>(raw[4 * i + 1]) << 8) |
                     (static_cast<TokenId>(raw[4 * i + 2]) << 16) |
                     (static_cast<TokenId>(raw[4 * i + 3]) << 24);
        }
        fn(std::span<const TokenId>(ids.data(), take));
        remaining -= take;
    }
}

} // namespace detail

// Counts over every shard with non-overlapping windows of at most T tokens
// that never span shard boundaries. Workers own private accumulators; the
// final fold runs in shard order (pure integer sums, so the result is
// independent of shard order and parallelism).
inline PnAccumulator pn_corpus(const std::vector<CorpusShard>& shards, PnOptions opts,
                               unsigned parallelism = 1) {
    if (shards.empty()) {
        throw std::invalid_argument("pn_corpus: no shards");
    }
    for (const auto& shard : shards) {
        if (shard.vocab_name != shards.front().vocab_name) {
            throw DataError("pn_corpus: shard '" + shard.path + "' uses vocab '" + shard.vocab_name +
                            "', expected '" + shards.front().vocab_name + "'");
        }
    }
    const unsigned workers = std::max(1u, std::min<unsigned>(parallelism, shards.size()));
    std::vector<PnAccumulator> partial(shards.size(), PnAccumulator(opts));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t s = next.fetch_add(1);
            if (s >= shards.size()) return;
            detail::for_each_window(shards[s], opts.window,
                                    [&](std::span<const TokenId> w) { partial[s].add_window(w); });
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (unsigned i = 0; i < workers; ++i) threads.emplace_back(work);
        for (auto& t : threads) t.join();
    }
    PnAccumulator total(opts);
    for (const auto& p : partial) {
        total.merge(p);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct PnReportRow {
    std::size_t n = 0;
    double p_n = 0.0;
    std::uint64_t trials = 0;
};

struct PnReport {
    std::vector<PnReportRow> rows;               // n in [1, max_n] with trials > 0
    std::size_t omitted_zero_trial_rows = 0;     // diagnostics
    std::optional<PnReportRow> overflow;         // n > max_n bucket, when populated
    std::optional<PnReportRow> zero;             // opt-in n = 0 bucket
    std::size_t max_n = 0;

    std::string csv() const {
        std::string out = "n,p_n,trials\n";
        if (zero) {
            out += "0," + format(zero->p_n) + ',' + std::to_string(zero->trials) + '\n';
        }
        for (const auto& row : rows) {
            out += std::to_string(row.n) + ',' + format(row.p_n) + ',' + std::to_string(row.trials) + '\n';
        }
        if (overflow) {
            out += "n>" + std::to_string(max_n) + ',' + format(overflow->p_n) + ',' +
                   std::to_string(overflow->trials) + '\n';
        }
        return out;
    }

private:
    static std::string format(double v) {
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
    }
};

inline PnReport pn_report(const PnAccumulator& acc) {
    PnReport report;
    report.max_n = acc.options().max_n;
    for (std::size_t n = 1; n <= acc.options().max_n; ++n) {
        if (acc.trials(n) == 0) {
            ++report.omitted_zero_trial_rows;
            continue;
        }
        report.rows.push_back(
            {n, static_cast<double>(acc.hits(n)) / static_cast<double>(acc.trials(n)), acc.trials(n)});
    }
    if (acc.overflow_trials() > 0) {
        report.overflow = PnReportRow{
            acc.options().max_n + 1,
            static_cast<double>(acc.overflow_hits()) / static_cast<double>(acc.overflow_trials()),
            acc.overflow_trials()};
    }
    if (acc.options().include_zero && acc.zero_trials() > 0) {
        report.zero = PnReportRow{
            0, static_cast<double>(acc.zero_hits()) / static_cast<double>(acc.zero_trials()),
            acc.zero_trials()};
    }
    return report;
}

// Zipf-distributed synthetic token stream: P(rank k) proportional to
// 1 / k^exponent over `types` ranks, sampled by inverse CDF. Token id = rank-1.
inline std::vector<TokenId> zipf_tokens(std::size_t count, std::size_t types, double exponent,
                                        std::uint64_t seed) {
    if (types == 0) {
        throw std::invalid_argument("zipf_tokens: types must be positive");
    }
    std::vector<double> cdf(types);
    double total = 0.0;
    for (std::size_t k = 1; k <= types; ++k) {
        total += 1.0 / std::pow(static_cast<double>(k), exponent);
        cdf[k - 1] = total;
    }
    for (double& c : cdf) c /= total;

    SplitMix64 rng(seed);
    std::vector<TokenId> out(count);
    for (auto& t : out) {
        const double u = rng.uniform01();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        t = static_cast<TokenId>(it - cdf.begin());
    }
    return out;
}

// Tokenizes line-delimited UTF-8 with the given tokenizer and writes one
// binary shard. Lines the tokenizer rejects as empty are skipped; a newline
// token joins consecutive lines when the vocab can express one.
inline CorpusShard ingest_text(const std::string& text_path, const std::string& out_path,
                               const Tokenizer& tok) {
    std::ifstream in(text_path, std::ios::binary);
    if (!in) {
        throw DataError("text corpus '" + text_path + "': cannot open");
    }
    const auto newline = tok.vocab()->newline_token();
    std::vector<TokenId> ids;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (!first && newline) {
            ids.push_back(*newline);
        }
        const auto seq = tok.tokenize(line);
        ids.insert(ids.end(), seq.ids().begin(), seq.ids().end());
        first = false;
    }
    write_token_file(out_path, tok.vocab()->name(), ids);
    return open_shard(out_path);
}

} // namespace reprobe

#include "reprobe/corpus.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>

using namespace reprobe;

namespace {

PnAccumulator accumulate(std::span<const TokenId> window, std::size_t max_n = 64,
                         std::size_t T = 1024) {
    PnAccumulator acc({.window = T, .max_n = max_n});
    acc.add_window(window);
    return acc;
}

void check_against_bruteforce(std::span<const TokenId> window, std::size_t max_n) {
    auto acc = accumulate(window, max_n);
    auto expected = oracle::pn_bruteforce(window, max_n);
    for (std::size_t n = 1; n <= max_n; ++n) {
        const std::uint64_t h = expected.hits.count(n) ? expected.hits[n] : 0;
        const std::uint64_t t = expected.trials.count(n) ? expected.trials[n] : 0;
        CHECK(acc.hits(n) == h);
        CHECK(acc.trials(n) == t);
    }
    CHECK(acc.overflow_hits() == expected.overflow_hits);
    CHECK(acc.overflow_trials() == expected.overflow_trials);
}

struct TempPath {
    std::filesystem::path path;
    explicit TempPath(const std::string& name) {
        path = std::filesystem::temp_directory_path() / name;
    }
    ~TempPath() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
    std::string str() const { return path.string(); }
};

} // namespace

TEST_CASE("window [a,b,a,b,a] gives P1 = 2/4 and P2 = 1/3") {
    const TokenId w[] = {0, 1, 0, 1, 0};
    auto acc = accumulate(w);
    CHECK(acc.trials(1) == 4);
    CHECK(acc.hits(1) == 2);
    CHECK(acc.trials(2) == 3);
    CHECK(acc.hits(2) == 1);

    auto report = pn_report(acc);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].n == 1);
    CHECK(report.rows[0].p_n == doctest::Approx(0.5));
    CHECK(report.rows[1].n == 2);
    CHECK(report.rows[1].p_n == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("all-distinct window accumulates trials but no hits") {
    const TokenId w[] = {0, 1, 2, 3, 4, 5};
    auto acc = accumulate(w);
    CHECK(acc.trials(1) > 0);
    for (std::size_t n = 1; n <= 8; ++n) {
        CHECK(acc.hits(n) == 0);
    }
}

TEST_CASE("constant window [x,x,x,x] forces P_n = 1 for n = 1..3") {
    const TokenId w[] = {7, 7, 7, 7};
    auto acc = accumulate(w);
    for (std::size_t n = 1; n <= 3; ++n) {
        CHECK(acc.hits(n) == 1);
        CHECK(acc.trials(n) == 1);
    }
}

TEST_CASE("windows shorter than two tokens contribute nothing") {
    PnAccumulator acc({.window = 16, .max_n = 8});
    const TokenId one[] = {3};
    acc.add_window(one);
    acc.add_window({});
    for (std::size_t n = 1; n <= 8; ++n) {
        CHECK(acc.trials(n) == 0);
    }
}

TEST_CASE("incremental accumulator equals brute force on random windows") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        SplitMix64 rng(derive_seed(99, seed));
        const std::size_t len = 2 + rng.below(63);
        std::vector<TokenId> w(len);
        for (auto& t : w) {
            t = static_cast<TokenId>(rng.below(16));
        }
        check_against_bruteforce(w, 64);
    }
}

TEST_CASE("counts beyond max_n fold into the overflow bucket exactly") {
    SplitMix64 rng(4);
    std::vector<TokenId> w(200);
    for (auto& t : w) {
        t = static_cast<TokenId>(rng.below(3)); // counts will exceed small max_n
    }
    check_against_bruteforce(w, 5);

    auto acc = accumulate(w, 5);
    CHECK(acc.overflow_trials() > 0);
    auto report = pn_report(acc);
    REQUIRE(report.overflow.has_value());
    CHECK(report.csv().find("n>5,") != std::string::npos);
}

TEST_CASE("merge is element-wise and order independent") {
    std::vector<TokenId> w1 = {0, 1, 0, 2, 0};
    std::vector<TokenId> w2 = {3, 3, 1, 3, 1};
    PnOptions opts{.window = 16, .max_n = 8};

    PnAccumulator a(opts), b(opts), ab(opts), ba(opts);
    a.add_window(w1);
    b.add_window(w2);
    ab.merge(a);
    ab.merge(b);
    ba.merge(b);
    ba.merge(a);
    for (std::size_t n = 1; n <= 8; ++n) {
        CHECK(ab.hits(n) == ba.hits(n));
        CHECK(ab.trials(n) == ba.trials(n));
    }

    // merging two windows equals adding both into one accumulator
    PnAccumulator both(opts);
    both.add_window(w1);
    both.add_window(w2);
    for (std::size_t n = 1; n <= 8; ++n) {
        CHECK(both.hits(n) == ab.hits(n));
        CHECK(both.trials(n) == ab.trials(n));
    }

    PnAccumulator other({.window = 32, .max_n = 8});
    CHECK_THROWS_AS(ab.merge(other), std::invalid_argument);
}

TEST_CASE("opt-in zero bucket counts window-local unseen types") {
    // window [a,b,a]: i=1 prefix {a}: b unseen among {a,b} -> trials0 += 1, hit (b) += 1
    //                 i=2 prefix {a,b}: none unseen -> trials0 += 0
    const TokenId w[] = {0, 1, 0};
    PnAccumulator acc({.window = 16, .max_n = 8, .include_zero = true});
    acc.add_window(w);
    CHECK(acc.zero_trials() == 1);
    CHECK(acc.zero_hits() == 1);

    auto report = pn_report(acc);
    REQUIRE(report.zero.has_value());
    CHECK(report.zero->p_n == doctest::Approx(1.0));

    // default report omits the zero bucket entirely
    PnAccumulator plain({.window = 16, .max_n = 8});
    plain.add_window(w);
    CHECK_FALSE(pn_report(plain).zero.has_value());
}

TEST_CASE("token files round-trip through the binary format") {
    TempPath file("reprobe_tokens.tok");
    std::vector<TokenId> ids = {5, 0, 70000, 2, 2, 9};
    write_token_file(file.str(), "demo-vocab", ids);

    auto shard = open_shard(file.str());
    CHECK(shard.vocab_name == "demo-vocab");
    CHECK(shard.token_count == ids.size());

    std::vector<TokenId> readback;
    detail::for_each_window(shard, 4, [&](std::span<const TokenId> w) {
        readback.insert(readback.end(), w.begin(), w.end());
    });
    CHECK(readback == ids);

    // corrupt magic
    {
        std::ofstream out(file.str(), std::ios::binary);
        out << "NOTATOKENFILE";
    }
    CHECK_THROWS_AS(open_shard(file.str()), DataError);
    CHECK_THROWS_AS(open_shard("/definitely/not/here.tok"), DataError);
}

TEST_CASE("pn_corpus over shards equals windowed counting, any parallelism") {
    SplitMix64 rng(12);
    std::vector<TokenId> all(5000);
    for (auto& t : all) {
        t = static_cast<TokenId>(rng.below(32));
    }
    PnOptions opts{.window = 64, .max_n = 32};

    // expected: window each shard's range separately, trailing short windows
    // truncating at the shard boundary exactly as pn_corpus does
    TempPath f1("reprobe_shard1.tok"), f2("reprobe_shard2.tok");
    const std::size_t split = 2500;
    write_token_file(f1.str(), "v", std::span(all.data(), split));
    write_token_file(f2.str(), "v", std::span(all.data() + split, all.size() - split));

    PnAccumulator expected(opts);
    for (std::size_t start = 0; start < split; start += opts.window) {
        expected.add_window(std::span(all.data() + start, std::min(opts.window, split - start)));
    }
    for (std::size_t start = split; start < all.size(); start += opts.window) {
        expected.add_window(
            std::span(all.data() + start, std::min(opts.window, all.size() - start)));
    }

    for (unsigned parallelism : {1u, 2u, 4u}) {
        auto got = pn_corpus({open_shard(f1.str()), open_shard(f2.str())}, opts, parallelism);
        for (std::size_t n = 1; n <= opts.max_n; ++n) {
            CHECK(got.hits(n) == expected.hits(n));
            CHECK(got.trials(n) == expected.trials(n));
        }
        CHECK(got.overflow_trials() == expected.overflow_trials());
    }

    // shard order does not matter
    auto reversed = pn_corpus({open_shard(f2.str()), open_shard(f1.str())}, opts, 2);
    for (std::size_t n = 1; n <= opts.max_n; ++n) {
        CHECK(reversed.hits(n) == expected.hits(n));
        CHECK(reversed.trials(n) == expected.trials(n));
    }

    // vocab mismatch across shards
    TempPath f3("reprobe_shard3.tok");
    write_token_file(f3.str(), "other", std::span(all.data(), 100));
    CHECK_THROWS_AS(pn_corpus({open_shard(f1.str()), open_shard(f3.str())}, opts, 1), DataError);
    CHECK_THROWS_AS(pn_corpus({}, opts, 1), std::invalid_argument);
}

TEST_CASE("single shard, single window equals pn_window") {
    const std::vector<TokenId> w = {0, 1, 0, 1, 0, 3, 3};
    TempPath file("reprobe_one_window.tok");
    write_token_file(file.str(), "v", w);
    PnOptions opts{.window = 1024, .max_n = 16};

    auto via_corpus = pn_corpus({open_shard(file.str())}, opts, 1);
    PnAccumulator direct(opts);
    pn_window(w, direct);
    for (std::size_t n = 1; n <= 16; ++n) {
        CHECK(via_corpus.hits(n) == direct.hits(n));
        CHECK(via_corpus.trials(n) == direct.trials(n));
    }
}

TEST_CASE("empty accumulator reports an empty table with diagnostics") {
    PnAccumulator acc({.window = 16, .max_n = 4});
    auto report = pn_report(acc);
    CHECK(report.rows.empty());
    CHECK(report.omitted_zero_trial_rows == 4);
    CHECK_FALSE(report.overflow.has_value());
    CHECK(report.csv() == "n,p_n,trials\n");
}

TEST_CASE("text ingestion tokenizes lines and skips blanks") {
    TempPath text("reprobe_corpus.txt"), tok_file("reprobe_corpus.tok");
    {
        std::ofstream out(text.str());
        out << "a b a\n\n   \nb b\n";
    }
    auto tok = WhitespaceTokenizer::build({"a b"});
    auto shard = ingest_text(text.str(), tok_file.str(), *tok);
    CHECK(shard.vocab_name == tok->vocab()->name());
    CHECK(shard.token_count == 5); // "a b a" + "b b", no newline token in a word vocab

    std::vector<TokenId> readback;
    detail::for_each_window(shard, 1024, [&](std::span<const TokenId> w) {
        readback.insert(readback.end(), w.begin(), w.end());
    });
    CHECK(readback == std::vector<TokenId>{0, 1, 0, 1, 1});

    CHECK_THROWS_AS(ingest_text("/missing/file.txt", tok_file.str(), *tok), DataError);
}

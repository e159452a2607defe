#include "reprobe/perturb.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

using namespace reprobe;

namespace {

VocabPtr vocab16() { return Vocab::create("v16", 16); }

} // namespace

TEST_CASE("sample_mask places exactly kept_count ones, reproducibly") {
    auto full = sample_mask(6, 6, 1);
    CHECK(full.keep == std::vector<std::uint8_t>(6, 1));

    auto m = sample_mask(8, 2, 42);
    CHECK(m.length() == 8);
    CHECK(m.kept_count() == 2);
    CHECK(sample_mask(8, 2, 42).keep == m.keep);

    CHECK_THROWS_AS(sample_mask(8, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_mask(8, 9, 1), std::invalid_argument);
}

TEST_CASE("sample_mask position marginals match the enumeration oracle") {
    // Enumerating all C(8,2) masks: each position appears in 7 of 28, so the
    // marginal keep probability is 2/8. Check 1e4 draws within 3 sigma.
    const std::size_t draws = 10000;
    std::size_t kept_at[8] = {0};
    for (std::uint64_t seed = 0; seed < draws; ++seed) {
        auto m = sample_mask(8, 2, derive_seed(5, seed));
        for (std::size_t i = 0; i < 8; ++i) {
            if (m.keep[i]) ++kept_at[i];
        }
    }
    const double p = 2.0 / 8.0;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(std::fabs(static_cast<double>(kept_at[i]) - draws * p) <= 3.0 * sigma);
    }
}

TEST_CASE("pair_mask geometry") {
    auto adjacent = pair_mask(6, 0, 7);
    auto kept = adjacent.kept_positions();
    REQUIRE(kept.size() == 2);
    CHECK(kept[1] - kept[0] - 1 == 0);

    // single feasible slot: length 5, distance 3 forces positions {0, 4}
    auto forced = pair_mask(5, 3, 99);
    CHECK(forced.kept_positions() == std::vector<std::size_t>{0, 4});

    CHECK(pair_mask(6, 1, 3).keep == pair_mask(6, 1, 3).keep);
    CHECK_THROWS_AS(pair_mask(4, 3, 1), std::invalid_argument);

    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        for (std::size_t distance : {0u, 1u, 3u}) {
            auto m = pair_mask(9, distance, derive_seed(6, seed * 4 + distance));
            auto pos = m.kept_positions();
            REQUIRE(pos.size() == 2);
            CHECK(pos[1] - pos[0] - 1 == distance);
        }
    }
}

TEST_CASE("suffix_mask keeps the trailing phrase") {
    CHECK(suffix_mask(4, 4).keep == std::vector<std::uint8_t>(4, 1));
    CHECK(suffix_mask(7, 3).keep == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1});
    CHECK_THROWS_AS(suffix_mask(7, 0), std::invalid_argument);
    CHECK_THROWS_AS(suffix_mask(7, 8), std::invalid_argument);
}

TEST_CASE("build_repeated_context makes n identical copies scored at the last") {
    auto v = vocab16();
    TokenSeq s(v, {3, 1, 4, 1, 5});
    TokenSeq prefix(v, {9, 9});
    TokenSeq sep(v, {0});

    auto suite = build_repeated_context(s, 11, prefix, sep);
    CHECK(suite.copies.size() == 11);
    CHECK(suite.target_copy_index == 10);
    for (const auto& c : suite.copies) {
        CHECK(c.ids() == s.ids());
    }
    CHECK(suite.kept_positions == std::vector<std::size_t>{0, 1, 2, 3, 4});

    auto single = build_repeated_context(s, 1, prefix, sep);
    CHECK(single.copies.size() == 1);
    CHECK(single.target_copy_index == 0);

    CHECK_THROWS_AS(build_repeated_context(s, 0, prefix, sep), std::invalid_argument);
    CHECK_THROWS_AS(build_repeated_context(TokenSeq(v, {}), 2, prefix, sep), std::invalid_argument);
}

TEST_CASE("full_context layout and target positions") {
    auto v = vocab16();
    TokenSeq s(v, {3, 1, 4});
    TokenSeq prefix(v, {9, 9});
    TokenSeq sep(v, {0});

    auto suite = build_repeated_context(s, 2, prefix, sep);
    // prefix sep copy sep copy
    CHECK(suite.full_context().ids() == std::vector<TokenId>{9, 9, 0, 3, 1, 4, 0, 3, 1, 4});
    CHECK(suite.target_positions() == std::vector<std::size_t>{7, 8, 9});

    auto no_prefix = build_repeated_context(s, 2, TokenSeq(v, {}), TokenSeq(v, {}));
    CHECK(no_prefix.full_context().ids() == std::vector<TokenId>{3, 1, 4, 3, 1, 4});
    CHECK(no_prefix.target_positions() == std::vector<std::size_t>{3, 4, 5});
}

TEST_CASE("perturbed suites keep kept tokens and resample the rest per copy") {
    auto v = vocab16();
    TokenSeq s(v, {3, 1, 4, 1, 5, 9});
    auto mask = pair_mask(6, 0, 21);
    auto kept = mask.kept_positions();

    auto suite = build_perturbed_suite(s, mask, 8, 77, TokenSeq(v, {}), TokenSeq(v, {}));
    CHECK(suite.copies.size() == 8);
    for (const auto& copy : suite.copies) {
        REQUIRE(copy.size() == s.size());
        for (std::size_t p : kept) {
            CHECK(copy[p] == s[p]); // kept-token conservation
        }
    }
    // replaced positions differ across copies at least somewhere
    bool any_difference = false;
    for (std::size_t c = 1; c < suite.copies.size(); ++c) {
        if (suite.copies[c].ids() != suite.copies[0].ids()) any_difference = true;
    }
    CHECK(any_difference);
}

TEST_CASE("all-ones mask reduces build_perturbed_suite to build_repeated_context") {
    auto v = vocab16();
    TokenSeq s(v, {3, 1, 4, 1});
    TokenSeq prefix(v, {7});
    TokenSeq sep(v, {0});
    auto perturbed = build_perturbed_suite(s, all_ones_mask(4), 5, 123, prefix, sep);
    auto repeated = build_repeated_context(s, 5, prefix, sep);
    CHECK(perturbed.full_context().ids() == repeated.full_context().ids());
    CHECK(perturbed.kept_positions == repeated.kept_positions);
    CHECK(perturbed.target_copy_index == repeated.target_copy_index);
}

TEST_CASE("family suites are nested prefixes of one perturbation stream") {
    auto v = vocab16();
    TokenSeq s(v, {3, 1, 4, 1, 5});
    auto mask = sample_mask(5, 2, 4);

    auto family = build_perturbed_family(s, mask, 6, 99, TokenSeq(v, {}), TokenSeq(v, {}));
    REQUIRE(family.size() == 6);
    for (std::size_t n = 1; n <= 6; ++n) {
        const auto& suite = family[n - 1];
        CHECK(suite.copies.size() == n);
        CHECK(suite.target_copy_index == n - 1);
        for (std::size_t c = 0; c < n; ++c) {
            CHECK(suite.copies[c].ids() == family.back().copies[c].ids());
        }
    }
    // standalone build matches the family entry under the same seed
    auto standalone = build_perturbed_suite(s, mask, 3, 99, TokenSeq(v, {}), TokenSeq(v, {}));
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(standalone.copies[c].ids() == family[2].copies[c].ids());
    }
}

TEST_CASE("replaced positions are independent across copies (chi-square)") {
    // Joint frequencies of the filler drawn at one position in copy 0 vs copy 1
    // over a 4-token vocab: 16 cells, expected uniform under independence.
    auto v = Vocab::create("v4", 4);
    TokenSeq s(v, {0, 1});
    auto mask = suffix_mask(2, 1); // position 0 replaced, position 1 kept
    const std::size_t runs = 8000;
    std::map<std::pair<TokenId, TokenId>, std::size_t> joint;
    for (std::uint64_t seed = 0; seed < runs; ++seed) {
        auto suite = build_perturbed_suite(s, mask, 2, derive_seed(31, seed), TokenSeq(v, {}),
                                           TokenSeq(v, {}));
        joint[{suite.copies[0][0], suite.copies[1][0]}] += 1;
    }
    const double expected = runs / 16.0;
    double chi2 = 0.0;
    for (TokenId a = 0; a < 4; ++a) {
        for (TokenId b = 0; b < 4; ++b) {
            const double observed = static_cast<double>(joint[{a, b}]);
            chi2 += (observed - expected) * (observed - expected) / expected;
        }
    }
    // chi-square with 15 dof: mean 15, far tail cutoff
    CHECK(chi2 < 45.0);
}

TEST_CASE("perturbation requires a resamplable vocab") {
    auto v = Vocab::create("v", 3, {0, 1}); // one usable token
    TokenSeq s(v, {2, 2});
    CHECK_THROWS_AS(build_perturbed_suite(s, suffix_mask(2, 1), 2, 1, TokenSeq(v, {}), TokenSeq(v, {})),
                    std::invalid_argument);
    // full mask never resamples, so it stays legal
    CHECK_NOTHROW(build_perturbed_suite(s, all_ones_mask(2), 2, 1, TokenSeq(v, {}), TokenSeq(v, {})));
}

TEST_CASE("sample_pair strategies") {
    auto v = Vocab::create("v", 5, {4});

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto [a, b] = sample_pair({PairStrategy::Kind::identical_pair, {}}, *v, seed);
        CHECK(a == b);
        CHECK_FALSE(v->is_special(a));
    }

    auto two = Vocab::create("two", 2);
    std::set<std::pair<TokenId, TokenId>> seen;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        seen.insert(sample_pair({PairStrategy::Kind::random_pair, {}}, *two, seed));
    }
    CHECK(seen.size() == 4); // all ordered pairs observed

    PairStrategy sim;
    sim.kind = PairStrategy::Kind::embedding_similar_pair;
    sim.embedding = {{1.0, 0.0}, {0.99, 0.1}, {0.0, 1.0}};
    auto three = Vocab::create("three", 3);
    bool anchored_at_0 = false;
    for (std::uint64_t seed = 0; seed < 64 && !anchored_at_0; ++seed) {
        auto [anchor, partner] = sample_pair(sim, *three, seed);
        CHECK(partner == oracle::cosine_nearest(sim.embedding, anchor, three->non_special_ids()));
        if (anchor == 0) {
            CHECK(partner == 1);
            anchored_at_0 = true;
        }
    }
    CHECK(anchored_at_0);

    CHECK_THROWS_AS(sample_pair({PairStrategy::Kind::embedding_similar_pair, {}}, *three, 1),
                    std::invalid_argument);
}

TEST_CASE("embedding partner matches the brute-force cosine oracle on random tables") {
    auto v = Vocab::create("v", 10);
    SplitMix64 rng(4242);
    for (int trial = 0; trial < 50; ++trial) {
        PairStrategy strategy;
        strategy.kind = PairStrategy::Kind::embedding_similar_pair;
        for (int row = 0; row < 10; ++row) {
            strategy.embedding.push_back({rng.uniform01() * 2 - 1, rng.uniform01() * 2 - 1,
                                          rng.uniform01() * 2 - 1});
        }
        auto [anchor, partner] = sample_pair(strategy, *v, rng.next());
        CHECK(partner == oracle::cosine_nearest(strategy.embedding, anchor, v->non_special_ids()));
        CHECK(partner != anchor);
    }
}

TEST_CASE("suites round-trip through jsonl") {
    auto v = vocab16();
    TokenSeq s(v, {3, 1, 4, 1, 5});
    std::vector<ProbeSuite> suites;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        suites.push_back(build_perturbed_suite(s, sample_mask(5, 2, seed), 3, seed, TokenSeq(v, {9}),
                                               default_separator(v)));
    }
    std::stringstream buffer;
    write_suites_jsonl(buffer, suites);

    auto loaded = read_suites_jsonl(buffer, v);
    REQUIRE(loaded.size() == suites.size());
    for (std::size_t i = 0; i < suites.size(); ++i) {
        CHECK(loaded[i].full_context().ids() == suites[i].full_context().ids());
        CHECK(loaded[i].kept_positions == suites[i].kept_positions);
        CHECK(loaded[i].target_copy_index == suites[i].target_copy_index);
        CHECK(loaded[i].seed == suites[i].seed);
    }

    std::stringstream bad{R"({"vocab":"other","prefix":[],"separator":[],"copies":[[1]],"kept_positions":[0],"target_copy_index":0})"};
    CHECK_THROWS_AS(read_suites_jsonl(bad, v), DataError);
}

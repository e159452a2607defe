#include "reprobe/tokens.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace reprobe;

namespace {

VocabPtr tiny_word_vocab() {
    return Vocab::create("tiny", 2, {}, {{0, "a"}, {1, "b"}});
}

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& name, const std::string& content) {
        path = std::filesystem::temp_directory_path() / name;
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
};

} // namespace

TEST_CASE("vocab construction validates specials and exposes non-specials") {
    auto v = Vocab::create("v", 5, {0, 4});
    CHECK(v->non_special_count() == 3);
    CHECK(v->is_special(0));
    CHECK(v->is_special(4));
    CHECK_FALSE(v->is_special(2));
    CHECK(v->non_special_ids() == std::vector<TokenId>{1, 2, 3});

    CHECK_THROWS_AS(Vocab::create("bad", 3, {3}), std::invalid_argument);
    CHECK_THROWS_AS(Vocab::create("bad", 0), std::invalid_argument);
}

TEST_CASE("token seq validates ids against its vocab") {
    auto v = Vocab::create("v", 4);
    CHECK_NOTHROW(TokenSeq(v, {0, 3, 1}));
    CHECK_THROWS_AS(TokenSeq(v, {4}), std::invalid_argument);
    CHECK_THROWS_AS(TokenSeq(nullptr, {}), std::invalid_argument);
}

TEST_CASE("whitespace tokenizer looks up words") {
    WhitespaceTokenizer tok(tiny_word_vocab());

    auto seq = tok.tokenize("a b a");
    CHECK(seq.ids() == std::vector<TokenId>{0, 1, 0});

    CHECK_THROWS_AS(tok.tokenize(""), DataError);
    CHECK_THROWS_AS(tok.tokenize("   "), DataError);
    CHECK_THROWS_AS(tok.tokenize("a c"), DataError);

    // determinism: repeated calls agree bit-for-bit
    for (int i = 0; i < 5; ++i) {
        CHECK(tok.tokenize("a b a").ids() == seq.ids());
    }
}

TEST_CASE("tokenizer round trip is idempotent") {
    WhitespaceTokenizer words(tiny_word_vocab());
    auto once = words.tokenize("a   b\n a");
    CHECK(words.tokenize(words.detokenize(once)).ids() == once.ids());

    ByteTokenizer bytes;
    auto seq = bytes.tokenize("hi\nthere");
    CHECK(bytes.detokenize(seq) == "hi\nthere");
    CHECK(bytes.tokenize(bytes.detokenize(seq)).ids() == seq.ids());
    CHECK(bytes.tokenize("").empty());
}

TEST_CASE("random sentence respects length bounds and seeding") {
    auto v = Vocab::create("v", 16);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto s = random_sentence(v, 5, 10, seed);
        CHECK(s.size() >= 5);
        CHECK(s.size() <= 10);
    }
    CHECK(random_sentence(v, 5, 10, 42).ids() == random_sentence(v, 5, 10, 42).ids());
    CHECK(random_sentence(v, 5, 10, 42).ids() != random_sentence(v, 5, 10, 43).ids());

    auto one = Vocab::create("one", 8, {0, 1, 2, 3, 4, 5, 6}); // only id 7 usable
    CHECK(random_sentence(one, 3, 3, 9).ids() == std::vector<TokenId>{7, 7, 7});

    CHECK_THROWS_AS(random_sentence(v, 0, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(random_sentence(v, 4, 3, 1), std::invalid_argument);
    auto all_special = Vocab::create("s", 2, {0, 1});
    CHECK_THROWS_AS(random_sentence(all_special, 1, 1, 1), std::invalid_argument);
}

TEST_CASE("random sentence never emits special ids") {
    auto v = Vocab::create("v", 10, {0, 9});
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto s = random_sentence(v, 1, 12, seed);
        for (TokenId id : s.ids()) {
            CHECK_FALSE(v->is_special(id));
        }
    }
}

TEST_CASE("random sentence histogram is uniform within 3 sigma") {
    // 4 usable tokens, >= 1e5 draws; expected 25000 per token,
    // sigma = sqrt(1e5 * 0.25 * 0.75) ~= 137.
    auto v = Vocab::create("v", 5, {0});
    std::size_t counts[5] = {0, 0, 0, 0, 0};
    std::size_t total = 0;
    for (std::uint64_t seed = 0; total < 100000; ++seed) {
        auto s = random_sentence(v, 4, 4, derive_seed(777, seed));
        for (TokenId id : s.ids()) {
            ++counts[id];
            ++total;
        }
    }
    const double expected = static_cast<double>(total) / 4.0;
    const double sigma = std::sqrt(static_cast<double>(total) * 0.25 * 0.75);
    CHECK(counts[0] == 0);
    for (int id = 1; id <= 4; ++id) {
        CHECK(std::fabs(static_cast<double>(counts[id]) - expected) <= 3.0 * sigma);
    }
}

TEST_CASE("splitmix64 streams are reproducible and split cleanly") {
    SplitMix64 a(123), b(123);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next() == b.next());
    }
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(5, 7) == derive_seed(5, 7));

    SplitMix64 r(9);
    for (int i = 0; i < 1000; ++i) {
        CHECK(r.below(13) < 13);
    }
    CHECK_THROWS_AS(r.below(0), std::invalid_argument);
}

TEST_CASE("line vocab files parse header specials and reject duplicates") {
    TempFile ok("reprobe_vocab_ok.txt", "#special 0\nfoo\nbar\nbaz\n");
    auto v = load_external_vocab(ok.path.string());
    CHECK(v->size() == 3);
    CHECK(v->special_ids() == std::vector<TokenId>{0});
    CHECK(v->text_of(1) == std::string("bar"));

    TempFile no_header("reprobe_vocab_plain.txt", "x\ny\nz\n");
    CHECK(load_external_vocab(no_header.path.string())->size() == 3);

    TempFile dup("reprobe_vocab_dup.txt", "x\ny\nx\n");
    CHECK_THROWS_AS(load_external_vocab(dup.path.string()), DataError);

    CHECK_THROWS_AS(load_external_vocab("/nonexistent/vocab.txt"), DataError);
}

TEST_CASE("json vocab files parse and validate") {
    TempFile ok("reprobe_vocab.json",
                R"({"size": 4, "special_ids": [0], "tokens": {"\n": 1, "hi": 2}})");
    auto v = load_external_vocab(ok.path.string());
    CHECK(v->size() == 4);
    CHECK(v->special_ids() == std::vector<TokenId>{0});
    CHECK(v->newline_token() == TokenId{1});

    TempFile dup("reprobe_vocab_dup.json", R"({"size": 4, "tokens": {"a": 1, "b": 1}})");
    CHECK_THROWS_AS(load_external_vocab(dup.path.string()), DataError);

    TempFile malformed("reprobe_vocab_bad.json", "{not json");
    CHECK_THROWS_AS(load_external_vocab(malformed.path.string()), DataError);

    TempFile out_of_range("reprobe_vocab_oor.json", R"({"size": 2, "special_ids": [5]})");
    CHECK_THROWS_AS(load_external_vocab(out_of_range.path.string()), DataError);
}

TEST_CASE("default separator uses a newline token when the vocab has one") {
    ByteTokenizer bytes;
    auto sep = default_separator(bytes.vocab());
    REQUIRE(sep.size() == 1);
    CHECK(sep[0] == TokenId{'\n'});

    auto blind = Vocab::create("blind", 8);
    CHECK(default_separator(blind).empty());
}

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "support.hpp"
#include "taskcast/metrics.hpp"

using namespace taskcast;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Tokens = std::vector<std::string>;

namespace {

bool is_subsequence(const Tokens& sub, const Tokens& seq)
{
    std::size_t j = 0;
    for (const auto& t : seq)
        if (j < sub.size() && sub[j] == t)
            ++j;
    return j == sub.size();
}

// Exhaustive oracle: longest subsequence of `a` (over all 2^|a| masks) that is
// also a subsequence of `b`.
std::size_t brute_lcs(const Tokens& a, const Tokens& b)
{
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        Tokens sub;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (mask & (1u << i))
                sub.push_back(a[i]);
        if (sub.size() > best && is_subsequence(sub, b))
            best = sub.size();
    }
    return best;
}

Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len, int alphabet)
{
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> sym(0, alphabet - 1);
    Tokens t(len(rng));
    for (auto& s : t)
        s = std::string(1, static_cast<char>('a' + sym(rng)));
    return t;
}

std::string random_text(std::mt19937_64& rng)
{
    static const char* pieces[] = {"The", "cat", "sat", ",", " ", "on", "MAT", ".", "a-b", "\t", "Ünïcödé", "42", "x!"};
    std::uniform_int_distribution<int> n(0, 10), p(0, 12);
    std::string s;
    for (int i = n(rng); i > 0; --i)
        s += pieces[p(rng)] + std::string(rng() % 2 ? " " : "");
    return s;
}

} // namespace

TEST_CASE("normalize examples")
{
    CHECK(normalize("The cat, sat.") == Tokens{"the", "cat", "sat"});
    CHECK(normalize("").empty());
    CHECK(normalize("A-B") == Tokens{"a", "b"});
    CHECK(normalize("  Ünïcödé  ÉCOLE ") == Tokens{"ünïcödé", "école"});
}

TEST_CASE("normalize honours a partial policy")
{
    NormalizationPolicy keep_case{false, true, true};
    CHECK(normalize("The Cat", keep_case) == Tokens{"The", "Cat"});
    NormalizationPolicy keep_punct{true, false, true};
    CHECK(normalize("A-B, c", keep_punct) == Tokens{"a-b,", "c"});
}

TEST_CASE("exact_match examples")
{
    const Tokens yes{"Yes"};
    CHECK(exact_match("Yes", yes) == 100.0);
    CHECK(exact_match("yes ", yes) == 100.0);
    CHECK(exact_match("no", Tokens{"yes", "maybe"}) == 0.0);
}

TEST_CASE("lcs_length examples")
{
    const Tokens a{"the", "cat", "sat"};
    CHECK(lcs_length(a, a) == 3);
    CHECK(lcs_length(Tokens{}, a) == 0);
    const Tokens b{"the", "cat", "was", "sat"};
    CHECK(lcs_length(a, b) == 3);
    CHECK(brute_lcs(a, b) == 3);
}

TEST_CASE("lcs_length equals exhaustive enumeration")
{
    std::mt19937_64 rng(20240521);
    int cases = 0;
    for (int alphabet : {2, 3, 5}) {
        for (int i = 0; i < 150; ++i) {
            const auto a = random_tokens(rng, 8, alphabet);
            const auto b = random_tokens(rng, 8, alphabet);
            REQUIRE(lcs_length(a, b) == brute_lcs(a, b));
            REQUIRE(lcs_length(b, a) == brute_lcs(a, b));
            ++cases;
        }
    }
    CHECK(cases >= 200);
}

TEST_CASE("rouge_l examples")
{
    CHECK(rouge_l("the cat sat", Tokens{"the cat sat"}) == 100.0);
    CHECK(rouge_l("aa bb", Tokens{"cc dd"}) == 0.0);
    // LCS 3, P = 3/3, R = 3/4, F1 = 2PR/(P+R) = 6/7
    const double p = 1.0, r = 0.75;
    CHECK_THAT(rouge_l("the cat sat", Tokens{"the cat was sat"}), WithinAbs(100.0 * 2 * p * r / (p + r), 1e-12));
    CHECK_THAT(rouge_l("the cat sat", Tokens{"the cat was sat"}), WithinAbs(85.7142857, 1e-6));
}

TEST_CASE("rouge_l degenerate inputs")
{
    CHECK(rouge_l("", Tokens{""}) == 100.0);
    CHECK(rouge_l("...", Tokens{"!"}) == 100.0);
    CHECK(rouge_l("", Tokens{"a"}) == 0.0);
    CHECK(rouge_l("a", Tokens{""}) == 0.0);
    CHECK(rouge_l("a", Tokens{"", "a"}) == 100.0);
}

TEST_CASE("metric properties on random text")
{
    std::mt19937_64 rng(99);
    for (int i = 0; i < 500; ++i) {
        const auto a = random_text(rng);
        const auto b = random_text(rng);
        const auto c = random_text(rng);

        const auto na = normalize(a);
        CHECK(normalize(join_tokens(na)) == na);

        const double r_ab = rouge_l(a, Tokens{b});
        CHECK(r_ab >= 0.0);
        CHECK(r_ab <= 100.0);
        CHECK_THAT(rouge_l(b, Tokens{a}), WithinAbs(r_ab, 1e-12));

        CHECK(rouge_l(a, Tokens{b, c}) >= r_ab);
        CHECK(exact_match(a, Tokens{b, c}) >= exact_match(a, Tokens{b}));

        if (!na.empty()) {
            CHECK(rouge_l(a, Tokens{a}) == 100.0);
            CHECK(exact_match(a, Tokens{a}) == 100.0);
        }
    }
}

TEST_CASE("avg_token_loss examples")
{
    CHECK(avg_token_loss(std::vector<double>{-0.5, -1.5}) == 1.0);
    const double zero = avg_token_loss(std::vector<double>{0.0, 0.0});
    CHECK(zero == 0.0);
    CHECK_FALSE(std::signbit(zero));
    CHECK(avg_token_loss(std::vector<double>{-0.5, -1.5, -1.0}) == 1.0);
    CHECK_THROWS_WITH(avg_token_loss(std::vector<double>{}), ContainsSubstring("no tokens"));
}

namespace {

Task make_task(std::size_t n, std::vector<std::string> refs)
{
    Task t{"t", "instr", {}, {}, std::nullopt};
    for (std::size_t i = 0; i < n; ++i)
        t.instances.push_back({"i" + std::to_string(i), "in", {refs[i]}});
    return t;
}

} // namespace

TEST_CASE("score_task aggregates instances")
{
    const auto t = make_task(3, {"yes", "no", "yes"});
    GenerationSet g;
    g.insert({"t", "i0", "Yes", std::nullopt});
    g.insert({"t", "i1", "yes", std::nullopt});
    g.insert({"t", "i2", "yes.", std::nullopt});
    const auto s = score_task(t, g, MetricKind::ExactMatch);
    CHECK_THAT(s.value, WithinAbs(200.0 / 3.0, 1e-12));
    CHECK(s.n_instances == 3);

    const auto t2 = make_task(2, {"a", "b"});
    GenerationSet l;
    l.insert({"t", "i0", "x", std::vector<double>{-1.0}});
    l.insert({"t", "i1", "x", std::vector<double>{-2.0}});
    CHECK(score_task(t2, l, MetricKind::AvgTokenLoss).value == 1.5);

    const auto t3 = make_task(1, {"the cat was sat"});
    GenerationSet r;
    r.insert({"t", "i0", "the cat sat", std::nullopt});
    CHECK_THAT(score_task(t3, r, MetricKind::RougeL).value, WithinAbs(600.0 / 7.0, 1e-12));
}

TEST_CASE("score_task errors")
{
    const auto t = make_task(2, {"a", "b"});
    GenerationSet g;
    g.insert({"t", "i0", "a", std::nullopt});
    CHECK_THROWS_WITH(score_task(t, g, MetricKind::RougeL), ContainsSubstring("missing generation"));
    g.insert({"t", "i1", "b", std::nullopt});
    CHECK_THROWS_WITH(score_task(t, g, MetricKind::AvgTokenLoss), ContainsSubstring("token_logprobs"));
}

TEST_CASE("scores file round-trip records the policy")
{
    support::TempDir dir;
    std::vector<TaskScore> scores{{"a", "ia", MetricKind::RougeL, 12.5, 3}, {"b", "ib", MetricKind::RougeL, 100.0, 1}};
    NormalizationPolicy policy{true, false, true};
    atomic_write(dir / "s.jsonl", scores_to_jsonl(scores, policy));
    const auto back = load_scores(dir / "s.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].task_id == "a");
    CHECK(back[0].value == 12.5);
    CHECK(back[1].n_instances == 1);
    CHECK(back[0].normalization == policy);

    support::write_text(dir / "bad.jsonl", R"({"task_id":"a","metric":"rouge_l","value":130,"n_instances":1})" "\n");
    CHECK_THROWS_WITH(load_scores(dir / "bad.jsonl"), ContainsSubstring("out of range"));
}

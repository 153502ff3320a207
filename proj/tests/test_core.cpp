#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <numeric>
#include <set>

#include "support.hpp"
#include "taskcast/hash.hpp"
#include "taskcast/io.hpp"
#include "taskcast/pcg.hpp"
#include "taskcast/stats.hpp"

using namespace taskcast;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("pcg32 matches the published reference vector")
{
    Pcg32 rng(42, 54);
    const std::array<std::uint32_t, 6> expected{0xa15c02b7u, 0x7b47f409u, 0xba1d3330u,
                                                0x83d2f293u, 0xbfa4784bu, 0xcbed606eu};
    for (auto e : expected)
        CHECK(rng() == e);
}

TEST_CASE("pcg32 bounded draws stay in range and cover it")
{
    Pcg32 rng(7);
    std::set<std::uint32_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.bounded(13);
        REQUIRE(v < 13);
        seen.insert(v);
    }
    CHECK(seen.size() == 13);
    CHECK(rng.bounded(1) == 0);
}

TEST_CASE("pcg_shuffle is a seeded permutation")
{
    std::vector<int> a(50), b(50);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    Pcg32 r1(3), r2(3);
    pcg_shuffle(std::span<int>(a), r1);
    pcg_shuffle(std::span<int>(b), r2);
    CHECK(a == b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);
    CHECK(a != expect);
}

TEST_CASE("fnv1a64 known values")
{
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("for_each_jsonl reports line numbers and rejects bad input")
{
    support::TempDir dir;
    const auto p = dir / "x.jsonl";

    support::write_text(p, "{\"a\":1}\r\n\n  \n{\"a\":2}\n");
    std::vector<std::size_t> lines;
    for_each_jsonl(p, [&](const json& obj, std::size_t line) {
        CHECK(obj.contains("a"));
        lines.push_back(line);
    });
    CHECK(lines == std::vector<std::size_t>{1, 4});

    support::write_text(p, "{\"a\":1}\n{oops\n");
    try {
        for_each_jsonl(p, [](const json&, std::size_t) {});
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    support::write_text(p, "[1,2]\n");
    CHECK_THROWS_AS(for_each_jsonl(p, [](const json&, std::size_t) {}), ParseError);

    support::write_text(p, "\xEF\xBB\xBF{\"a\":1}\n");
    CHECK_THROWS_WITH(for_each_jsonl(p, [](const json&, std::size_t) {}), ContainsSubstring("byte-order mark"));
}

TEST_CASE("atomic_write replaces contents and leaves no temp file")
{
    support::TempDir dir;
    const auto p = dir / "out.txt";
    atomic_write(p, "one");
    atomic_write(p, "two");
    CHECK(read_file(p) == "two");
    CHECK_FALSE(std::filesystem::exists(p.string() + ".tmp"));
}

TEST_CASE("rmse examples")
{
    const std::vector<double> a{50, 60}, b{40, 60};
    CHECK_THAT(rmse(a, b), WithinAbs(std::sqrt(50.0), 1e-12));
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(std::vector<double>{0}, std::vector<double>{100}) == 100.0);
    CHECK_THROWS_AS(rmse(a, std::vector<double>{1}), Error);
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST_CASE("sample std of split RMSEs uses n - 1")
{
    const std::vector<double> r{1, 2, 3};
    CHECK(mean(r) == 2.0);
    REQUIRE(sample_std(r));
    CHECK_THAT(*sample_std(r), WithinAbs(1.0, 1e-15));
    CHECK_FALSE(sample_std(std::vector<double>{4}));
    CHECK_THAT(population_std(r), WithinAbs(std::sqrt(2.0 / 3.0), 1e-15));
}

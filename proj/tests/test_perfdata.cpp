#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "support.hpp"
#include "taskcast/perfdata.hpp"

using namespace taskcast;
using Catch::Matchers::ContainsSubstring;

namespace {

PerfDataset dataset_of(std::size_t n, const std::string& prefix = "t")
{
    PerfDataset ds(MetricKind::RougeL);
    for (std::size_t i = 0; i < n; ++i)
        ds.add({prefix + std::to_string(i), "instruction " + std::to_string(i), MetricKind::RougeL, double(i % 100), 1});
    return ds;
}

// Sizes recomputed from the rule: round-half-up, at least one task per part.
std::size_t expected_part(double f, std::size_t n)
{
    const double x = f * static_cast<double>(n);
    auto r = static_cast<std::size_t>(x);
    if (x - static_cast<double>(r) >= 0.5 - 1e-9)
        ++r;
    return r == 0 ? 1 : r;
}

// Independent PCG32 + back-to-front Fisher-Yates, written from the algorithm
// description rather than shared with the library.
std::vector<std::string> oracle_shuffle(std::vector<std::string> ids, std::uint64_t seed)
{
    std::uint64_t state = 0;
    const std::uint64_t inc = (0x7461736bULL << 1) | 1;
    auto next = [&] {
        const std::uint64_t old = state;
        state = old * 6364136223846793005ULL + inc;
        const std::uint32_t x = static_cast<std::uint32_t>(((old >> 18) ^ old) >> 27);
        const std::uint32_t rot = static_cast<std::uint32_t>(old >> 59);
        return (x >> rot) | (x << ((32 - rot) & 31));
    };
    next();
    state += seed;
    next();
    for (std::size_t i = ids.size(); i > 1; --i) {
        const auto bound = static_cast<std::uint32_t>(i);
        const std::uint32_t threshold = static_cast<std::uint32_t>((0x100000000ULL - bound) % bound);
        std::uint32_t r;
        do
            r = next();
        while (r < threshold);
        std::swap(ids[i - 1], ids[r % bound]);
    }
    return ids;
}

} // namespace

TEST_CASE("build_dataset joins tasks and scores")
{
    support::TempDir dir;
    support::write_toy_corpus(dir.path(), 20, 2);
    const auto tasks = load_tasks(dir / "tasks.jsonl");
    std::vector<ScoreRecord> scores;
    for (const auto& t : tasks)
        scores.push_back({t.task_id, MetricKind::RougeL, 50.0, 2, {}});
    const auto ds = build_dataset(tasks, scores, MetricKind::RougeL);
    CHECK(ds.size() == 20);
    CHECK(ds.at("task003").instruction == tasks.at("task003").instruction);

    auto fewer = scores;
    fewer.erase(fewer.begin() + 7);
    CHECK_THROWS_WITH(build_dataset(tasks, fewer, MetricKind::RougeL), ContainsSubstring("task007"));

    auto mixed = scores;
    mixed[3].metric = MetricKind::ExactMatch;
    CHECK_THROWS_WITH(build_dataset(tasks, mixed, MetricKind::RougeL), ContainsSubstring("metric mismatch"));
}

TEST_CASE("dataset file round-trip")
{
    support::TempDir dir;
    const auto ds = dataset_of(15);
    save_dataset(dir / "d.json", ds);
    CHECK(load_dataset(dir / "d.json") == ds);
}

TEST_CASE("split sizes follow the paper layout")
{
    const auto s119 = split_sizes(119);
    CHECK(s119.test == 12);
    CHECK(s119.val == 12);
    CHECK(s119.train == 95);
    const auto s10 = split_sizes(10);
    CHECK(s10.test == 1);
    CHECK(s10.val == 1);
    CHECK(s10.train == 8);
    CHECK_THROWS_AS(split_sizes(2), Error);
}

TEST_CASE("every plan is a disjoint cover with the documented sizes")
{
    for (std::size_t n = 3; n <= 500; ++n) {
        const auto ds = dataset_of(n);
        const auto plans = make_splits(ds, 2, static_cast<std::int64_t>(n));
        for (const auto& p : plans) {
            const std::size_t v = expected_part(0.1, n), t = expected_part(0.1, n);
            REQUIRE(p.val.size() == v);
            REQUIRE(p.test.size() == t);
            REQUIRE(p.train.size() == n - v - t);
            std::set<std::string> all;
            for (const auto* part : {&p.train, &p.val, &p.test})
                for (const auto& id : *part)
                    REQUIRE(all.insert(id).second);
            REQUIRE(all.size() == n);
        }
    }
}

TEST_CASE("plans match an independent shuffle oracle")
{
    const auto ds = dataset_of(37);
    for (std::int64_t seed : {0, 1, 17, 123456789}) {
        const auto plan = make_split(ds.sorted_ids(), seed);
        const auto order = oracle_shuffle(ds.sorted_ids(), static_cast<std::uint64_t>(seed));
        const auto sz = split_sizes(37);
        std::vector<std::string> test(order.begin(), order.begin() + sz.test);
        std::vector<std::string> val(order.begin() + sz.test, order.begin() + sz.test + sz.val);
        std::vector<std::string> train(order.begin() + sz.test + sz.val, order.end());
        for (auto* v : {&test, &val, &train})
            std::sort(v->begin(), v->end());
        CHECK(plan.test == test);
        CHECK(plan.val == val);
        CHECK(plan.train == train);
    }
}

TEST_CASE("split plans are deterministic and seed-sensitive")
{
    const auto ds = dataset_of(119);
    const auto a = make_splits(ds, 10, 5);
    const auto b = make_splits(ds, 10, 5);
    CHECK(a == b);
    std::size_t test_total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].seed == 5 + static_cast<std::int64_t>(i));
        test_total += a[i].test.size();
    }
    CHECK(test_total == 120);
    for (std::size_t i = 1; i < a.size(); ++i)
        CHECK(a[i].test != a[0].test);
}

TEST_CASE("plan file round-trip")
{
    support::TempDir dir;
    const auto plan = make_split(dataset_of(30).sorted_ids(), 3);
    save_plan(dir / "p.json", plan);
    CHECK(load_plan(dir / "p.json") == plan);
}

TEST_CASE("augment_train only grows the training part")
{
    const auto ds = dataset_of(119);
    const auto plan = make_splits(ds, 1, 0).front();
    const auto extra = dataset_of(156, "extra");
    const auto aug = augment_train(plan, extra, MetricKind::RougeL);
    CHECK(aug.train.size() == 251);
    CHECK(aug.val == plan.val);
    CHECK(aug.test == plan.test);

    CHECK(augment_train(plan, PerfDataset(MetricKind::RougeL), MetricKind::RougeL) == plan);

    PerfDataset clash(MetricKind::RougeL);
    clash.add({plan.test.front(), "x", MetricKind::RougeL, 1.0, 1});
    CHECK_THROWS_WITH(augment_train(plan, clash, MetricKind::RougeL), ContainsSubstring("collides"));

    PerfDataset other(MetricKind::ExactMatch);
    other.add({"new", "x", MetricKind::ExactMatch, 1.0, 1});
    CHECK_THROWS_WITH(augment_train(plan, other, MetricKind::RougeL), ContainsSubstring("metric mismatch"));
}

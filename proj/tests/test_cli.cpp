#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "support.hpp"
#include "taskcast/cli.hpp"

using namespace taskcast;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "taskcast");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::set<std::string> listing(const std::filesystem::path& dir)
{
    std::set<std::string> names;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        names.insert(std::filesystem::relative(e.path(), dir).string());
    return names;
}

} // namespace

TEST_CASE("unknown subcommand is a usage error")
{
    const auto r = run({"frobnicate"});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("frobnicate"));
    CHECK_THAT(r.err, ContainsSubstring("Usage"));
    CHECK(run({}).code == 2);
}

TEST_CASE("missing flag is named")
{
    const auto r = run({"score", "--gens", "g.jsonl", "--metric", "rouge_l", "--out", "s.jsonl"});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("--tasks"));
}

TEST_CASE("bad flag values are usage errors")
{
    support::TempDir dir;
    support::write_toy_corpus(dir.path(), 4, 2);
    const auto t = (dir / "tasks.jsonl").string(), g = (dir / "gens.jsonl").string();
    CHECK(run({"score", "--tasks", t, "--gens", g, "--metric", "bleu", "--out", (dir / "s").string()}).code == 2);
    CHECK(run({"split", "--dataset", t, "--n-splits", "0", "--out-dir", (dir / "p").string()}).code == 2);
    CHECK_FALSE(std::filesystem::exists(dir / "s"));
    CHECK_FALSE(std::filesystem::exists(dir / "p"));
}

TEST_CASE("help exits 0 for every subcommand")
{
    CHECK(run({"--help"}).code == 0);
    for (const char* sub : {"ingest", "validate", "collect", "score", "dataset", "split", "train", "predict", "evaluate",
                            "experiment", "compare", "report"}) {
        CAPTURE(sub);
        const auto r = run({sub, "--help"});
        CHECK(r.code == 0);
        CHECK_THAT(r.out, ContainsSubstring(sub));
    }
}

TEST_CASE("domain failures exit 1")
{
    support::TempDir dir;
    support::write_text(dir / "t.jsonl", "{broken\n");
    support::write_text(dir / "g.jsonl", "");
    const auto r = run({"score", "--tasks", (dir / "t.jsonl").string(), "--gens", (dir / "g.jsonl").string(), "--metric",
                        "rouge_l", "--out", (dir / "s.jsonl").string()});
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring(":1:"));
}

TEST_CASE("validate reports gaps with exit 1")
{
    support::TempDir dir;
    support::write_toy_corpus(dir.path(), 3, 2);
    const auto t = (dir / "tasks.jsonl").string();
    CHECK(run({"validate", "--tasks", t, "--gens", (dir / "gens.jsonl").string()}).code == 0);
    const auto text = read_file(dir / "gens.jsonl");
    support::write_text(dir / "partial.jsonl", text.substr(text.find('\n') + 1));
    const auto r = run({"validate", "--tasks", t, "--gens", (dir / "partial.jsonl").string()});
    CHECK(r.code == 1);
    CHECK_THAT(r.out, ContainsSubstring("task000"));
}

TEST_CASE("full pipeline through the command line")
{
    support::TempDir dir;
    support::write_toy_corpus(dir.path(), 20, 5);
    auto p = [&](const char* name) { return (dir / name).string(); };

    REQUIRE(run({"score", "--tasks", p("tasks.jsonl"), "--gens", p("gens.jsonl"), "--metric", "rouge_l", "--out",
                 p("scores.jsonl")})
                .code == 0);
    REQUIRE(run({"dataset", "--tasks", p("tasks.jsonl"), "--scores", p("scores.jsonl"), "--metric", "rouge_l", "--out",
                 p("dataset.json")})
                .code == 0);
    const auto split = run({"split", "--dataset", p("dataset.json"), "--n-splits", "3", "--seed", "1", "--out-dir", p("plans")});
    REQUIRE(split.code == 0);
    CHECK_THAT(split.out, ContainsSubstring("16/2/2"));
    const auto plan = p("plans/split_000.json");
    const auto train = run({"train", "--dataset", p("dataset.json"), "--split", plan, "--predictor", "ridge", "--lambdas",
                            "0.1,1", "--out", p("model.json")});
    REQUIRE(train.code == 0);
    CHECK(json::parse(train.out).at("hyperparameters").contains("lambda"));

    const auto ev = run({"evaluate", "--model", p("model.json"), "--dataset", p("dataset.json"), "--split", plan});
    REQUIRE(ev.code == 0);
    CHECK(json::parse(ev.out).at("n") == 2);

    REQUIRE(run({"predict", "--model", p("model.json"), "--dataset", p("dataset.json"), "--out", p("pred.jsonl")}).code == 0);
    // predictions round-trip through the external adapter
    const auto ext = load_external(dir / "pred.jsonl", MetricKind::RougeL);
    CHECK_NOTHROW(ext.predict("task005", ""));

    support::write_text(dir / "exp.cfg", "tasks = tasks.jsonl\ngenerations = gens.jsonl\nn_splits = 2\npredictors = ridge\n"
                                         "ridge_lambdas = 1\noutput_dir = ignored\n");
    const auto exp = run({"experiment", "--config", p("exp.cfg"), "--out-dir", p("exp"), "--label", "toy", "--set",
                          "n_splits=3"});
    REQUIRE(exp.code == 0);
    CHECK_THAT(exp.out, ContainsSubstring("| mean |"));
    CHECK_FALSE(std::filesystem::exists(dir / "ignored"));
    const auto report = load_report(dir / "exp/report.json");
    CHECK(report.n_splits == 3);
    CHECK(report.label == "toy");

    REQUIRE(run({"report", "--report", p("exp/report.json"), "--out-dir", p("rerendered")}).code == 0);
    CHECK(read_file(dir / "rerendered/table.md") == read_file(dir / "exp/table.md"));
    CHECK(read_file(dir / "rerendered/scatter_ridge.svg") == read_file(dir / "exp/scatter_ridge.svg"));

    support::write_text(dir / "a.cfg", "label = A\ntasks = tasks.jsonl\ngenerations = gens.jsonl\nn_splits = 2\n");
    support::write_text(dir / "b.cfg", "label = B\ntasks = tasks.jsonl\nscores = scores.jsonl\nn_splits = 2\n");
    const auto cmp = run({"compare", "--config", p("a.cfg"), "--config", p("b.cfg"), "--out-dir", p("cmp")});
    REQUIRE(cmp.code == 0);
    CHECK_THAT(cmp.out, ContainsSubstring("| predictor | A | B |"));
    CHECK(std::filesystem::exists(dir / "cmp/table.csv"));

    support::write_text(dir / "c.cfg", "label = C\ntasks = tasks.jsonl\ngenerations = gens.jsonl\nn_splits = 3\n");
    const auto bad = run({"compare", "--config", p("a.cfg"), "--config", p("c.cfg"), "--out-dir", p("cmp2")});
    CHECK(bad.code == 1);
    CHECK_THAT(bad.err, ContainsSubstring("misaligned"));

    // nothing outside the declared outputs was written
    const auto files = listing(dir.path());
    for (const auto& f : files) {
        CAPTURE(f);
        const bool declared = f.starts_with("plans") || f.starts_with("exp") || f.starts_with("rerendered")
                              || f.starts_with("cmp") || f.ends_with(".jsonl") || f.ends_with(".json") || f.ends_with(".cfg");
        CHECK(declared);
        CHECK_FALSE(f.ends_with(".tmp"));
    }
}

TEST_CASE("ingest converts SuperNI files")
{
    support::TempDir dir;
    std::filesystem::create_directory(dir / "ni");
    for (int i = 0; i < 2; ++i) {
        const json doc{{"Definition", {"Define " + std::to_string(i)}},
                       {"Positive Examples", json::array()},
                       {"Instances", {{{"id", "x" + std::to_string(i)}, {"input", "in"}, {"output", {"out"}}}}}};
        support::write_text(dir / ("ni/task" + std::to_string(i) + ".json"), doc.dump());
    }
    const auto r = run({"ingest", "--superni", (dir / "ni").string(), "--out", (dir / "t.jsonl").string()});
    REQUIRE(r.code == 0);
    const auto tasks = load_tasks(dir / "t.jsonl");
    CHECK(tasks.size() == 2);
    CHECK(tasks.at("task1").instruction == "Define 1");
}

#include "doctest.h"
#include "gen.hpp"

#include "mdflow/harness.hpp"
#include "mdflow/skeleton.hpp"

using namespace mdf;
using namespace mdf::testing;

namespace {

std::string canonical(const Skeleton &s) { return dump_graph(canonicalize(compile(s).graph)); }

std::int64_t run_graph(const Graph &g, std::int64_t x, const OpcodeRegistry &reg) {
    return decode_int(evaluate_graph(g, encode_int(x), reg));
}

// fork then add: x -> 2x
Graph doubling_custom() {
    return parse_graph("1 NoId fork [_] -> [(NoId,2,1),(NoId,2,2)]\n"
                       "2 NoId add [_,_] -> [OUT]\n");
}

} // namespace

TEST_CASE("pipe of two farms compiles to the two-instruction graph") {
    auto s = pipe(farm(seq("f")), farm(seq("g")));
    CHECK(canonical(*s) == "1 1 f [_] -> [(1,2,1)]\n2 1 g [_] -> [OUT]\n");
    auto t = compile(*s).graph;
    CHECK(t.gid == NoId);
    CHECK(t.input_id == 1);
    CHECK(t.instructions.at(1).dests[0] == Dest::to(2, 1));
}

TEST_CASE("seq and farm base cases") {
    auto g = compile(*seq("f")).graph;
    REQUIRE(g.instructions.size() == 1);
    CHECK(g.instructions.begin()->second.dests == std::vector<Dest>{Dest::out()});
    CHECK(dump_graph(compile(*farm(farm(seq("f")))).graph) == dump_graph(g));
}

TEST_CASE("compiled templates are valid, absent and farm-transparent") {
    Gen gen(5);
    for (int i = 0; i < 300; ++i) {
        auto s = random_skeleton(gen, 6);
        auto t = compile(*s).graph;
        CHECK(validate_graph(t).empty());
        CHECK(liveness_violations(t).empty());
        for (const auto &[id, instr] : t.instructions)
            for (const auto &tok : instr.inputs)
                CHECK_FALSE(tok.present());
        CHECK(canonical(*s) == canonical(*parse_skeleton(to_text(*s))));
        CHECK(canonical(*farm(s)) == canonical(*s));
    }
}

TEST_CASE("compiled graphs compute the skeleton's function") {
    auto reg = standard_registry();
    Gen gen(9);
    for (int i = 0; i < 200; ++i) {
        auto s = random_skeleton(gen, 6);
        auto g = compile(*s).graph;
        auto n = normalize(*s);
        auto ng = compile(*n).graph;
        CHECK(ng.instructions.size() == 1);
        for (int k = 0; k < 5; ++k) {
            auto x = gen.int_in(-100000, 100000);
            auto want = ref_skeleton(*s, x);
            CHECK(run_graph(g, x, reg) == want);
            CHECK(run_graph(ng, x, reg) == want);
        }
    }
}

TEST_CASE("normalize") {
    CHECK(to_text(*normalize(*pipe(farm(seq("f")), farm(seq("g"))))) == "farm(seq:f|g)");
    CHECK(to_text(*normalize(*seq("f"))) == "farm(seq:f)");
    auto abc = normalize(*pipe(pipe(seq("inc"), seq("dbl")), seq("sq")));
    CHECK(to_text(*abc) == "farm(seq:inc|dbl|sq)");

    auto reg = standard_registry();
    auto g = compile(*abc).graph;
    Gen gen(4);
    for (int i = 0; i < 100; ++i) {
        auto x = gen.int_in(-5000, 5000);
        CHECK(run_graph(g, x, reg) == ref_apply("sq", ref_apply("dbl", ref_apply("inc", x))));
    }

    try {
        normalize(*pipe(custom(doubling_custom()), seq("f")));
        FAIL("expected NotNormalizable");
    } catch (const Error &e) {
        CHECK(e.code() == Errc::NotNormalizable);
    }
}

TEST_CASE("custom graph linked ahead of a pipeline") {
    auto reg = standard_registry();
    auto s = pipe(custom(doubling_custom()), pipe(farm(seq("inc")), seq("dbl")));
    auto g = compile(*s).graph;
    CHECK(validate_graph(g).empty());
    CHECK(g.instructions.size() == 4);
    for (std::int64_t x : {0, 1, 7, -3})
        CHECK(run_graph(g, x, reg) == 2 * (2 * x + 1));
}

TEST_CASE("link_custom") {
    GraphTemplate t{doubling_custom(), "test"};
    CHECK(link_custom(t, Dest::out()).graph == t.graph);
    auto linked = link_custom(t, Dest::to(3, 1));
    CHECK(linked.graph.instructions.at(2).dests[0] == Dest::to(3, 1));
    try {
        link_custom(linked, Dest::to(4, 1));
        FAIL("expected NoExternalDest");
    } catch (const Error &e) {
        CHECK(e.code() == Errc::NoExternalDest);
    }
}

TEST_CASE("invalid custom graphs are rejected") {
    auto bad = doubling_custom();
    bad.instructions.at(1).dests[1] = Dest::to(2, 1);
    try {
        compile(*custom(bad));
        FAIL("expected InvalidCustomGraph");
    } catch (const Error &e) {
        CHECK(e.code() == Errc::InvalidCustomGraph);
    }
}

TEST_CASE("map graph") {
    OpcodeRegistry reg;
    auto noop = [](std::span<const Payload> a) { return std::vector<Payload>(a.begin(), a.end()); };
    reg.add("split", 1, 3, [](std::span<const Payload> a) { return std::vector<Payload>(3, a[0]); });
    reg.add("split1", 1, 1, noop);
    reg.add("w", 1, 1, noop);
    reg.add("merge", 3, 1, [](std::span<const Payload> a) { return std::vector<Payload>{a[0]}; });
    reg.add("merge1", 1, 1, noop);
    reg.add("merge2", 2, 1, [](std::span<const Payload> a) { return std::vector<Payload>{a[0]}; });

    auto g = build_map_graph(reg, "split", "w", "merge", 3).graph;
    CHECK(validate_graph(g).empty());
    CHECK(g.instructions.size() == 5);
    std::size_t into_merge = 0;
    Id merge_id = NoId;
    for (const auto &[id, instr] : g.instructions)
        if (instr.opcode == "merge")
            merge_id = id;
    for (const auto &[id, instr] : g.instructions)
        for (const auto &d : instr.dests)
            if (d.instr == merge_id)
                ++into_merge;
    CHECK(into_merge == 3);
    CHECK(g.instructions.at(merge_id).in_arity() == 3);

    CHECK(build_map_graph(reg, "split1", "w", "merge1", 1).graph.instructions.size() == 3);
    try {
        build_map_graph(reg, "split", "w", "merge2", 3);
        FAIL("expected ArityMismatch");
    } catch (const Error &e) {
        CHECK(e.code() == Errc::ArityMismatch);
    }
}

TEST_CASE("skeleton text round trips") {
    Gen gen(13);
    for (int i = 0; i < 200; ++i) {
        auto s = random_skeleton(gen, 5);
        auto text = to_text(*s);
        CHECK(to_text(*parse_skeleton(text)) == text);
    }
    CHECK(to_text(*parse_skeleton(" pipe( seq:a , seq:b , seq:c ) ")) == "pipe(seq:a,pipe(seq:b,seq:c))");
    CHECK_THROWS_AS(parse_skeleton("pipe(seq:a)"), Error);
    CHECK_THROWS_AS(parse_skeleton("farm(seq:a"), Error);
    CHECK_THROWS_AS(parse_skeleton("loop(seq:a)"), Error);
}

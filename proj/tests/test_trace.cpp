#include <catch2/catch_amalgamated.hpp>

#include "decwatt/trace.hpp"

using namespace decwatt;
using namespace decwatt::trace;

TEST_CASE("minimal legal trace is a single StreamBegin") {
    const auto t = parse_trace(std::string("SB\n"), "x");
    REQUIRE(t.events.size() == 1);
    REQUIRE(std::holds_alternative<StreamBegin>(t.events[0]));
}

TEST_CASE("fields map directly from key=value lines") {
    const auto t = parse_trace(std::string("SB\nMV d=0 w=16 h=8 x=2 y=0\n"));
    REQUIRE(t.events.size() == 2);
    const auto& mv = std::get<MotionVector>(t.events[1]);
    CHECK(mv == MotionVector{0, 16, 8, 2, 0});

    const auto t2 = parse_trace(std::string("SB\nCBF d=2 p=Cb intra=1\nSL t=B\nSAO y=1 cb=0 cr=2\n"));
    CHECK(std::get<Cbf>(t2.events[1]) == Cbf{2, Plane::Cb, true});
    CHECK(std::get<Slice>(t2.events[2]) == Slice{SliceType::B});
    CHECK(std::get<SaoCtu>(t2.events[3]) == SaoCtu{1, 0, 2});
}

TEST_CASE("negative motion vectors parse") {
    const auto t = parse_trace(std::string("SB\nMV d=1 w=8 h=8 x=-6 y=-12\n"));
    const auto& mv = std::get<MotionVector>(t.events[1]);
    CHECK(mv.mv_x == -6);
    CHECK(mv.mv_y == -12);
}

TEST_CASE("comments and blank lines are skipped") {
    const auto t = parse_trace(std::string("# header comment\n\nSB\n# inline\nC\n"));
    REQUIRE(t.events.size() == 2);
}

static Errc parse_errc(const std::string& text, int* line = nullptr) {
    try {
        parse_trace(text);
        FAIL("expected a parse error");
    } catch (const TraceFormatError& e) {
        if (line) *line = e.line_no();
        return e.code();
    }
    return Errc::MalformedLine;
}

TEST_CASE("part_mode 3 is rejected as a range violation") {
    int line = 0;
    CHECK(parse_errc("SB\nPU d=0 merge=1 part=3\n", &line) == Errc::RangeViolation);
    CHECK(line == 2);
}

TEST_CASE("AMP partitions below 16x16 are rejected") {
    CHECK(parse_errc("SB\nPU d=3 merge=0 part=4\n") == Errc::RangeViolation);
    const auto ok = parse_trace(std::string("SB\nPU d=2 merge=0 part=4\n"));
    CHECK(ok.events.size() == 2);
}

TEST_CASE("declared ranges are enforced") {
    CHECK(parse_errc("SB\nCUI d=5\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nCUS d=4\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nILM d=0 m=3 mpm=1\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nILM d=1 m=35 mpm=1\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nMV d=0 w=10 h=8 x=0 y=0\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nMV d=0 w=0 h=8 x=0 y=0\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nMVD v=-1\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nCR v=-3\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nCBF d=0 p=Y intra=0\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nBS bs=3\n") == Errc::RangeViolation);
    CHECK(parse_errc("SB\nSAO y=3 cb=0 cr=0\n") == Errc::RangeViolation);
}

TEST_CASE("malformed lines are distinguished from range violations") {
    CHECK(parse_errc("SB\nXYZ d=1\n") == Errc::MalformedLine);
    CHECK(parse_errc("SB\nCUI\n") == Errc::MalformedLine);             // missing key
    CHECK(parse_errc("SB\nCUI d=1 d=2\n") == Errc::MalformedLine);     // duplicate key
    CHECK(parse_errc("SB\nCUI d=x\n") == Errc::MalformedLine);         // not an integer
    CHECK(parse_errc("SB\nILM d=1 m=0 mpm=2\n") == Errc::MalformedLine); // bad boolean
    CHECK(parse_errc("SB\nCUI d=1 z=0\n") == Errc::MalformedLine);     // unknown key
    CHECK(parse_errc("SB\nSL t=X\n") == Errc::MalformedLine);
    CHECK(parse_errc("SB\nCBF d=1 p=Q intra=0\n") == Errc::MalformedLine);
}

TEST_CASE("stream begin bookkeeping") {
    CHECK(parse_errc("") == Errc::MissingStreamBegin);
    CHECK(parse_errc("# only a comment\n") == Errc::MissingStreamBegin);
    CHECK(parse_errc("C\nSB\n") == Errc::MissingStreamBegin);
    CHECK(parse_errc("SB\nC\nSB\n") == Errc::DuplicateStreamBegin);
}

TEST_CASE("generator is deterministic in the seed") {
    const auto a = generate_random_trace(1, 10);
    const auto b = generate_random_trace(1, 10);
    CHECK(serialize_trace(a) == serialize_trace(b));
    const auto c = generate_random_trace(2, 10);
    CHECK(serialize_trace(a) != serialize_trace(c));
}

TEST_CASE("generator output sizes follow the hint") {
    CHECK(generate_random_trace(3, 1).events.size() == 2);
    CHECK(generate_random_trace(3, 500).events.size() == 501);
}

TEST_CASE("every event variant is reachable") {
    const auto t = generate_random_trace(11, 4000);
    std::vector<bool> seen(std::variant_size_v<SyntaxEvent>, false);
    for (const auto& ev : t.events) seen[ev.index()] = true;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        INFO("variant index " << i);
        CHECK(seen[i]);
    }
}

TEST_CASE("serialize-parse round trip is the identity") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto t = generate_random_trace(seed, 200);
        const auto text = serialize_trace(t);
        const auto parsed = parse_trace(text, t.stream_id);
        REQUIRE(parsed == t);
        CHECK(serialize_trace(parsed) == text); // idempotent
    }
}

TEST_CASE("serialize-parse-serialize is idempotent on non-canonical files") {
    const std::string messy = "# header\n"
                              "SB\n"
                              "\n"
                              "MV  y=0   x=2 h=8\tw=16 d=0\n"
                              "CBF intra=1 p=Cb d=2\r\n"
                              "# trailing comment\n"
                              "SAO cr=2 cb=0 y=1\n";
    const auto once = serialize_trace(parse_trace(messy));
    const auto twice = serialize_trace(parse_trace(once));
    CHECK(once == twice);
    CHECK(once == "SB\nMV d=0 w=16 h=8 x=2 y=0\nCBF d=2 p=Cb intra=1\nSAO y=1 cb=0 cr=2\n");
}

TEST_CASE("generated events always validate") {
    const auto t = generate_random_trace(99, 3000);
    for (const auto& ev : t.events) CHECK_FALSE(validate_event(ev).has_value());
}

TEST_CASE("fuzz: one mutated range-checked field raises exactly one range violation") {
    struct Mutation {
        const char* line;
        const char* field;
    };
    const Mutation mutations[] = {
        {"CUI d=9", "d"},          {"CUP d=-1", "d"},        {"CUS d=7", "d"},
        {"ILM d=5 m=0 mpm=1", "d"}, {"ILM d=1 m=99 mpm=0", "m"},
        {"PU d=1 merge=0 part=8", "part"},                   {"PU d=3 merge=1 part=5", "part"},
        {"MV d=4 w=8 h=8 x=0 y=0", "d"},                     {"MV d=0 w=13 h=8 x=0 y=0", "w"},
        {"MV d=0 w=8 h=-4 x=0 y=0", "h"},                    {"BI d=0 w=7 h=8", "w"},
        {"MVD v=-2", "v"},         {"CR v=-1", "v"},         {"CBF d=5 p=Y intra=1", "d"},
        {"BS bs=9", "bs"},         {"SAO y=0 cb=4 cr=0", "cb"},
    };
    for (const auto& m : mutations) {
        const std::string text = std::string("SB\nC\n") + m.line + "\n";
        try {
            parse_trace(text);
            FAIL("expected a range violation for: " << m.line);
        } catch (const TraceFormatError& e) {
            INFO(m.line);
            CHECK(e.code() == Errc::RangeViolation);
            CHECK(e.line_no() == 3);
            CHECK(e.field() == m.field);
        }
    }
}

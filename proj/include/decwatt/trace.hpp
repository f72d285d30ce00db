#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "decwatt/errors.hpp"
#include "decwatt/random.hpp"

namespace decwatt::trace {

enum class SliceType { I, P, B };
enum class Plane { Y, Cb, Cr };

// One struct per instrumentation hook. Depth 0 is a 64x64 block, each
// further depth halves the block edge (depth 4 = 4x4).
struct StreamBegin {
    bool operator==(const StreamBegin&) const = default;
};
struct Slice {
    SliceType type;
    bool operator==(const Slice&) const = default;
};
struct CuIntra {
    int depth; // 0..4
    bool operator==(const CuIntra&) const = default;
};
struct CuInter {
    int depth; // 0..3, non-skip inter CU
    bool operator==(const CuInter&) const = default;
};
struct CuSkip {
    int depth; // 0..3
    bool operator==(const CuSkip&) const = default;
};
struct IntraLumaMode {
    int depth;    // 1..4
    int mode;     // 0..34
    bool mpm_hit; // most-probable-mode flag was taken
    bool operator==(const IntraLumaMode&) const = default;
};
struct PuInter {
    int depth;     // 0..3
    bool merge;
    int part_mode; // 0..7 excluding 3 (PART_NxN never reaches the inter rules)
    bool operator==(const PuInter&) const = default;
};
struct MotionVector {
    int depth; // 0..3
    int pb_w;  // luma pels, positive multiple of 4
    int pb_h;
    int mv_x;  // quarter-pel units, may be negative
    int mv_y;
    bool operator==(const MotionVector&) const = default;
};
struct BiPu {
    int depth; // 0..3
    int pb_w;
    int pb_h;
    bool operator==(const BiPu&) const = default;
};
struct MvdLarge {
    int abs_mvd_minus2; // >= 0, one event per coded MVD component
    bool operator==(const MvdLarge&) const = default;
};
struct Coeff {
    bool operator==(const Coeff&) const = default;
};
struct CoeffG1 {
    bool operator==(const CoeffG1&) const = default;
};
struct CsbfNonDc {
    bool operator==(const CsbfNonDc&) const = default;
};
struct CoeffRemaining {
    int value; // >= 0
    bool operator==(const CoeffRemaining&) const = default;
};
struct Cbf {
    int depth; // 1..4 (luma transform depth)
    Plane plane;
    bool intra;
    bool operator==(const Cbf&) const = default;
};
struct TransformSkip {
    bool operator==(const TransformSkip&) const = default;
};
struct BoundaryStrength {
    int bs; // 0..2
    bool operator==(const BoundaryStrength&) const = default;
};
struct SaoCtu {
    int type_y;  // 0 off, 1 band offset, 2 edge offset
    int type_cb;
    int type_cr;
    bool operator==(const SaoCtu&) const = default;
};

using SyntaxEvent = std::variant<StreamBegin, Slice, CuIntra, CuInter, CuSkip, IntraLumaMode,
                                 PuInter, MotionVector, BiPu, MvdLarge, Coeff, CoeffG1, CsbfNonDc,
                                 CoeffRemaining, Cbf, TransformSkip, BoundaryStrength, SaoCtu>;

struct SyntaxEventTrace {
    std::string stream_id;
    std::vector<SyntaxEvent> events; // events.front() is the unique StreamBegin
    bool operator==(const SyntaxEventTrace&) const = default;
};

namespace detail {

struct FieldIssue {
    const char* field;
    std::string what;
};

inline std::optional<FieldIssue> check_depth(int d, int lo, int hi) {
    if (d < lo || d > hi)
        return FieldIssue{"d", "expected " + std::to_string(lo) + ".." + std::to_string(hi) +
                                   ", got " + std::to_string(d)};
    return std::nullopt;
}

inline std::optional<FieldIssue> check_pb(int w, int h) {
    if (w <= 0 || w % 4 != 0) return FieldIssue{"w", "must be a positive multiple of 4"};
    if (h <= 0 || h % 4 != 0) return FieldIssue{"h", "must be a positive multiple of 4"};
    if (w * h < 16) return FieldIssue{"w", "pb_w*pb_h must be >= 16"};
    return std::nullopt;
}

} // namespace detail

/// Range check for a single event; parsing and the generator share it.
inline std::optional<detail::FieldIssue> validate_event(const SyntaxEvent& ev) {
    using detail::FieldIssue;
    using R = std::optional<FieldIssue>;
    return std::visit(
        [](const auto& e) -> R {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, CuIntra>) {
                return detail::check_depth(e.depth, 0, 4);
            } else if constexpr (std::is_same_v<T, CuInter> || std::is_same_v<T, CuSkip>) {
                return detail::check_depth(e.depth, 0, 3);
            } else if constexpr (std::is_same_v<T, IntraLumaMode>) {
                if (auto r = detail::check_depth(e.depth, 1, 4)) return r;
                if (e.mode < 0 || e.mode > 34) return FieldIssue{"m", "expected 0..34"};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, PuInter>) {
                if (auto r = detail::check_depth(e.depth, 0, 3)) return r;
                if (e.part_mode < 0 || e.part_mode > 7 || e.part_mode == 3)
                    return FieldIssue{"part", "expected 0..7 excluding 3"};
                // AMP partitions exist only for CUs of 16x16 and larger
                if (e.part_mode >= 4 && e.depth > 2)
                    return FieldIssue{"part", "AMP partition requires depth 0..2"};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, MotionVector>) {
                if (auto r = detail::check_depth(e.depth, 0, 3)) return r;
                return detail::check_pb(e.pb_w, e.pb_h);
            } else if constexpr (std::is_same_v<T, BiPu>) {
                if (auto r = detail::check_depth(e.depth, 0, 3)) return r;
                return detail::check_pb(e.pb_w, e.pb_h);
            } else if constexpr (std::is_same_v<T, MvdLarge>) {
                if (e.abs_mvd_minus2 < 0) return FieldIssue{"v", "must be >= 0"};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, CoeffRemaining>) {
                if (e.value < 0) return FieldIssue{"v", "must be >= 0"};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, Cbf>) {
                return detail::check_depth(e.depth, 1, 4);
            } else if constexpr (std::is_same_v<T, BoundaryStrength>) {
                if (e.bs < 0 || e.bs > 2) return FieldIssue{"bs", "expected 0..2"};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, SaoCtu>) {
                if (e.type_y < 0 || e.type_y > 2) return FieldIssue{"y", "expected 0..2"};
                if (e.type_cb < 0 || e.type_cb > 2) return FieldIssue{"cb", "expected 0..2"};
                if (e.type_cr < 0 || e.type_cr > 2) return FieldIssue{"cr", "expected 0..2"};
                return std::nullopt;
            } else {
                return std::nullopt;
            }
        },
        ev);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

/// key=value fields of one line, keys required exactly once each.
class FieldMap {
public:
    FieldMap(int line_no, const std::vector<std::string_view>& tokens) : line_no_(line_no) {
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            const auto tok = tokens[i];
            const auto eq = tok.find('=');
            if (eq == std::string_view::npos || eq == 0 || eq + 1 > tok.size())
                throw malformed_line(line_no_, "expected key=value, got '" + std::string(tok) + "'");
            for (const auto& [k, v] : kv_)
                if (k == tok.substr(0, eq))
                    throw malformed_line(line_no_, "duplicate key '" + std::string(k) + "'");
            kv_.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
        }
    }

    std::string_view get(std::string_view key) {
        for (auto& [k, v] : kv_) {
            if (k == key) {
                consumed_.push_back(k);
                return v;
            }
        }
        throw malformed_line(line_no_, "missing key '" + std::string(key) + "'");
    }

    int get_int(std::string_view key) {
        const auto v = get(key);
        int out = 0;
        const auto* first = v.data();
        const auto* last = v.data() + v.size();
        auto [ptr, ec] = std::from_chars(first, last, out);
        if (ec != std::errc{} || ptr != last)
            throw malformed_line(line_no_, "key '" + std::string(key) + "': not an integer: '" +
                                               std::string(v) + "'");
        return out;
    }

    bool get_bool(std::string_view key) {
        const auto v = get(key);
        if (v == "0") return false;
        if (v == "1") return true;
        throw malformed_line(line_no_, "key '" + std::string(key) + "': expected 0 or 1, got '" +
                                           std::string(v) + "'");
    }

    void finish() {
        if (consumed_.size() != kv_.size()) {
            for (const auto& [k, v] : kv_) {
                bool used = false;
                for (auto c : consumed_) used = used || c == k;
                if (!used) throw malformed_line(line_no_, "unknown key '" + std::string(k) + "'");
            }
        }
    }

private:
    int line_no_;
    std::vector<std::pair<std::string_view, std::string_view>> kv_;
    std::vector<std::string_view> consumed_;
};

inline SyntaxEvent parse_event_line(int line_no, const std::vector<std::string_view>& tokens) {
    const auto tag = tokens[0];
    FieldMap f(line_no, tokens);
    SyntaxEvent ev;
    if (tag == "SB") {
        ev = StreamBegin{};
    } else if (tag == "SL") {
        const auto t = f.get("t");
        if (t == "I") ev = Slice{SliceType::I};
        else if (t == "P") ev = Slice{SliceType::P};
        else if (t == "B") ev = Slice{SliceType::B};
        else throw malformed_line(line_no, "key 't': expected I, P or B");
    } else if (tag == "CUI") {
        ev = CuIntra{f.get_int("d")};
    } else if (tag == "CUP") {
        ev = CuInter{f.get_int("d")};
    } else if (tag == "CUS") {
        ev = CuSkip{f.get_int("d")};
    } else if (tag == "ILM") {
        IntraLumaMode e{};
        e.depth = f.get_int("d");
        e.mode = f.get_int("m");
        e.mpm_hit = f.get_bool("mpm");
        ev = e;
    } else if (tag == "PU") {
        PuInter e{};
        e.depth = f.get_int("d");
        e.merge = f.get_bool("merge");
        e.part_mode = f.get_int("part");
        ev = e;
    } else if (tag == "MV") {
        MotionVector e{};
        e.depth = f.get_int("d");
        e.pb_w = f.get_int("w");
        e.pb_h = f.get_int("h");
        e.mv_x = f.get_int("x");
        e.mv_y = f.get_int("y");
        ev = e;
    } else if (tag == "BI") {
        BiPu e{};
        e.depth = f.get_int("d");
        e.pb_w = f.get_int("w");
        e.pb_h = f.get_int("h");
        ev = e;
    } else if (tag == "MVD") {
        ev = MvdLarge{f.get_int("v")};
    } else if (tag == "C") {
        ev = Coeff{};
    } else if (tag == "CG1") {
        ev = CoeffG1{};
    } else if (tag == "CSB") {
        ev = CsbfNonDc{};
    } else if (tag == "CR") {
        ev = CoeffRemaining{f.get_int("v")};
    } else if (tag == "CBF") {
        Cbf e{};
        e.depth = f.get_int("d");
        const auto p = f.get("p");
        if (p == "Y") e.plane = Plane::Y;
        else if (p == "Cb") e.plane = Plane::Cb;
        else if (p == "Cr") e.plane = Plane::Cr;
        else throw malformed_line(line_no, "key 'p': expected Y, Cb or Cr");
        e.intra = f.get_bool("intra");
        ev = e;
    } else if (tag == "TSF") {
        ev = TransformSkip{};
    } else if (tag == "BS") {
        ev = BoundaryStrength{f.get_int("bs")};
    } else if (tag == "SAO") {
        SaoCtu e{};
        e.type_y = f.get_int("y");
        e.type_cb = f.get_int("cb");
        e.type_cr = f.get_int("cr");
        ev = e;
    } else {
        throw malformed_line(line_no, "unknown tag '" + std::string(tag) + "'");
    }
    f.finish();
    if (auto issue = validate_event(ev)) throw range_violation(line_no, issue->field, issue->what);
    return ev;
}

} // namespace detail

/// Parses the line-delimited trace format (see docs/trace-format.md).
/// '#' starts a comment line; blank lines are skipped.
inline SyntaxEventTrace parse_trace(std::istream& in, std::string stream_id = "") {
    SyntaxEventTrace t;
    t.stream_id = std::move(stream_id);
    std::string line;
    int line_no = 0;
    bool have_begin = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tokens = detail::split_ws(line);
        if (tokens.empty() || tokens[0][0] == '#') continue;
        SyntaxEvent ev = detail::parse_event_line(line_no, tokens);
        if (std::holds_alternative<StreamBegin>(ev)) {
            if (have_begin)
                throw TraceFormatError(Errc::DuplicateStreamBegin, line_no, "",
                                       "line " + std::to_string(line_no) + ": duplicate SB");
            have_begin = true;
        } else if (!have_begin) {
            throw TraceFormatError(Errc::MissingStreamBegin, line_no, "",
                                   "line " + std::to_string(line_no) + ": event before SB");
        }
        t.events.push_back(ev);
    }
    if (!have_begin)
        throw TraceFormatError(Errc::MissingStreamBegin, line_no, "", "trace has no SB line");
    return t;
}

inline SyntaxEventTrace parse_trace(const std::string& text, std::string stream_id = "") {
    std::istringstream in(text);
    return parse_trace(in, std::move(stream_id));
}

inline void serialize_event(const SyntaxEvent& ev, std::ostream& out) {
    std::visit(
        [&out](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, StreamBegin>) {
                out << "SB";
            } else if constexpr (std::is_same_v<T, Slice>) {
                out << "SL t=" << (e.type == SliceType::I ? 'I' : e.type == SliceType::P ? 'P' : 'B');
            } else if constexpr (std::is_same_v<T, CuIntra>) {
                out << "CUI d=" << e.depth;
            } else if constexpr (std::is_same_v<T, CuInter>) {
                out << "CUP d=" << e.depth;
            } else if constexpr (std::is_same_v<T, CuSkip>) {
                out << "CUS d=" << e.depth;
            } else if constexpr (std::is_same_v<T, IntraLumaMode>) {
                out << "ILM d=" << e.depth << " m=" << e.mode << " mpm=" << (e.mpm_hit ? 1 : 0);
            } else if constexpr (std::is_same_v<T, PuInter>) {
                out << "PU d=" << e.depth << " merge=" << (e.merge ? 1 : 0) << " part=" << e.part_mode;
            } else if constexpr (std::is_same_v<T, MotionVector>) {
                out << "MV d=" << e.depth << " w=" << e.pb_w << " h=" << e.pb_h << " x=" << e.mv_x
                    << " y=" << e.mv_y;
            } else if constexpr (std::is_same_v<T, BiPu>) {
                out << "BI d=" << e.depth << " w=" << e.pb_w << " h=" << e.pb_h;
            } else if constexpr (std::is_same_v<T, MvdLarge>) {
                out << "MVD v=" << e.abs_mvd_minus2;
            } else if constexpr (std::is_same_v<T, Coeff>) {
                out << "C";
            } else if constexpr (std::is_same_v<T, CoeffG1>) {
                out << "CG1";
            } else if constexpr (std::is_same_v<T, CsbfNonDc>) {
                out << "CSB";
            } else if constexpr (std::is_same_v<T, CoeffRemaining>) {
                out << "CR v=" << e.value;
            } else if constexpr (std::is_same_v<T, Cbf>) {
                out << "CBF d=" << e.depth << " p="
                    << (e.plane == Plane::Y ? "Y" : e.plane == Plane::Cb ? "Cb" : "Cr")
                    << " intra=" << (e.intra ? 1 : 0);
            } else if constexpr (std::is_same_v<T, TransformSkip>) {
                out << "TSF";
            } else if constexpr (std::is_same_v<T, BoundaryStrength>) {
                out << "BS bs=" << e.bs;
            } else if constexpr (std::is_same_v<T, SaoCtu>) {
                out << "SAO y=" << e.type_y << " cb=" << e.type_cb << " cr=" << e.type_cr;
            }
        },
        ev);
    out << '\n';
}

/// Canonical form: one event per line, fixed key order, no comments.
inline void serialize_trace(const SyntaxEventTrace& t, std::ostream& out) {
    for (const auto& ev : t.events) serialize_event(ev, out);
}

inline std::string serialize_trace(const SyntaxEventTrace& t) {
    std::ostringstream out;
    serialize_trace(t, out);
    return out.str();
}

/// Deterministic synthetic trace: StreamBegin plus size_hint weighted-random
/// events. Coefficient and filter events dominate, roughly like real streams.
inline SyntaxEventTrace generate_random_trace(std::uint64_t seed, int size_hint) {
    if (size_hint < 1) size_hint = 1;
    Rng rng(seed);
    SyntaxEventTrace t;
    t.stream_id = "rnd-" + std::to_string(seed);
    t.events.reserve(static_cast<std::size_t>(size_hint) + 1);
    t.events.emplace_back(StreamBegin{});

    const auto pb_size = [&rng] { return 4 << rng.uniform_int(0, 4); };
    const auto slice = [&rng]() -> SyntaxEvent {
        const auto k = rng.uniform_int(0, 2);
        return Slice{k == 0 ? SliceType::I : k == 1 ? SliceType::P : SliceType::B};
    };

    // variant weights; index order matches the emitters below
    static constexpr int weights[] = {2, 6, 6, 6, 8, 8, 10, 4, 6, 14, 8, 6, 8, 8, 2, 10, 6};
    int total = 0;
    for (int w : weights) total += w;

    for (int i = 0; i < size_hint; ++i) {
        int pick = static_cast<int>(rng.uniform_int(0, total - 1));
        int variant = 0;
        while (pick >= weights[variant]) {
            pick -= weights[variant];
            ++variant;
        }
        switch (variant) {
        case 0: t.events.push_back(slice()); break;
        case 1: t.events.emplace_back(CuIntra{static_cast<int>(rng.uniform_int(0, 4))}); break;
        case 2: t.events.emplace_back(CuInter{static_cast<int>(rng.uniform_int(0, 3))}); break;
        case 3: t.events.emplace_back(CuSkip{static_cast<int>(rng.uniform_int(0, 3))}); break;
        case 4:
            t.events.emplace_back(IntraLumaMode{static_cast<int>(rng.uniform_int(1, 4)),
                                                static_cast<int>(rng.uniform_int(0, 34)),
                                                rng.uniform01() < 0.7});
            break;
        case 5: {
            static constexpr int parts[] = {0, 1, 2, 4, 5, 6, 7};
            const int part = parts[rng.uniform_int(0, 6)];
            const int max_depth = part >= 4 ? 2 : 3; // no AMP below 16x16
            t.events.emplace_back(PuInter{static_cast<int>(rng.uniform_int(0, max_depth)),
                                          rng.uniform01() < 0.5, part});
            break;
        }
        case 6:
            t.events.emplace_back(MotionVector{static_cast<int>(rng.uniform_int(0, 3)), pb_size(),
                                               pb_size(), static_cast<int>(rng.uniform_int(-64, 64)),
                                               static_cast<int>(rng.uniform_int(-64, 64))});
            break;
        case 7:
            t.events.emplace_back(
                BiPu{static_cast<int>(rng.uniform_int(0, 3)), pb_size(), pb_size()});
            break;
        case 8: t.events.emplace_back(MvdLarge{static_cast<int>(rng.uniform_int(0, 500))}); break;
        case 9: t.events.emplace_back(Coeff{}); break;
        case 10: t.events.emplace_back(CoeffG1{}); break;
        case 11: t.events.emplace_back(CsbfNonDc{}); break;
        case 12: t.events.emplace_back(CoeffRemaining{static_cast<int>(rng.uniform_int(0, 200))}); break;
        case 13: {
            const auto p = rng.uniform_int(0, 2);
            t.events.emplace_back(Cbf{static_cast<int>(rng.uniform_int(1, 4)),
                                      p == 0 ? Plane::Y : p == 1 ? Plane::Cb : Plane::Cr,
                                      rng.uniform01() < 0.5});
            break;
        }
        case 14: t.events.emplace_back(TransformSkip{}); break;
        case 15: t.events.emplace_back(BoundaryStrength{static_cast<int>(rng.uniform_int(0, 2))}); break;
        default:
            t.events.emplace_back(SaoCtu{static_cast<int>(rng.uniform_int(0, 2)),
                                         static_cast<int>(rng.uniform_int(0, 2)),
                                         static_cast<int>(rng.uniform_int(0, 2))});
            break;
        }
    }
    return t;
}

} // namespace decwatt::trace

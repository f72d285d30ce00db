#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "decwatt/errors.hpp"
#include "decwatt/trace.hpp"

namespace decwatt::features {

/// FA: the accurate 90-parameter feature set. FS: the simple 27-parameter set.
enum class FeatureKind { FA, FS };

inline std::string_view to_string(FeatureKind k) { return k == FeatureKind::FA ? "FA" : "FS"; }

// Feature labels of the counter table, one enumerator per label row.
enum class FeatureLabel : std::uint8_t {
    E0, Islice, PBslice,
    intraCU, pla, dc, hvd, ang, all, noMPM,
    skip, merge, mergeSMP, mergeAMP, inter, interSMP, interAMP, interCU,
    fracpelHor, fracpelVer, fracpelAvg, chrHalfpel, bi, MVD,
    coeff, coeffg1, CSBF, val,
    TrIntraY, TrIntraC, TrInterY, TrInterC, Tr, TSF,
    Bs0, Bs1, Bs2, Bs,
    SAO_Y_BO, SAO_Y_EO, SAO_Y, SAO_C_BO, SAO_C_EO, SAO_C, SAO_allComps,
};

inline constexpr int kNumFeatureLabels = 45;

inline std::string_view label_name(FeatureLabel l) {
    static constexpr std::string_view names[kNumFeatureLabels] = {
        "E_0", "Islice", "PBslice",
        "intraCU", "pla", "dc", "hvd", "ang", "all", "noMPM",
        "skip", "merge", "mergeSMP", "mergeAMP", "inter", "interSMP", "interAMP", "interCU",
        "fracpelHor", "fracpelVer", "fracpelAvg", "chrHalfpel", "bi", "MVD",
        "coeff", "coeffg1", "CSBF", "val",
        "TrIntraY", "TrIntraC", "TrInterY", "TrInterC", "Tr", "TSF",
        "Bs0", "Bs1", "Bs2", "Bs",
        "SAO_Y_BO", "SAO_Y_EO", "SAO_Y", "SAO_C_BO", "SAO_C_EO", "SAO_C", "SAO_allComps",
    };
    return names[static_cast<int>(l)];
}

/// One counter id: a label plus, for depth-dependent labels, its depth.
/// depth == -1 means the label is a single aggregate counter.
struct FeatureId {
    FeatureLabel label;
    int depth = -1;
    bool operator==(const FeatureId&) const = default;
};

inline std::string to_string(const FeatureId& id) {
    std::string s(label_name(id.label));
    if (id.depth >= 0) s += "(" + std::to_string(id.depth) + ")";
    return s;
}

namespace detail {

struct CatalogRow {
    FeatureLabel label;
    int depth_lo; // -1/-1 for aggregate counters
    int depth_hi;
};

// Counter table row order; depth-dependent labels expand depth ascending.
inline constexpr CatalogRow kFaRows[] = {
    {FeatureLabel::E0, -1, -1},        {FeatureLabel::Islice, -1, -1},
    {FeatureLabel::PBslice, -1, -1},   {FeatureLabel::intraCU, -1, -1},
    {FeatureLabel::pla, 1, 4},         {FeatureLabel::dc, 1, 4},
    {FeatureLabel::hvd, 1, 4},         {FeatureLabel::ang, 1, 4},
    {FeatureLabel::noMPM, -1, -1},     {FeatureLabel::skip, 0, 3},
    {FeatureLabel::merge, 0, 3},       {FeatureLabel::mergeSMP, 0, 3},
    {FeatureLabel::mergeAMP, 0, 2},    {FeatureLabel::inter, 0, 3},
    {FeatureLabel::interSMP, 0, 3},    {FeatureLabel::interAMP, 0, 2},
    {FeatureLabel::fracpelHor, 0, 3},  {FeatureLabel::fracpelVer, 0, 3},
    {FeatureLabel::chrHalfpel, 0, 3},  {FeatureLabel::bi, -1, -1},
    {FeatureLabel::MVD, -1, -1},       {FeatureLabel::coeff, -1, -1},
    {FeatureLabel::coeffg1, -1, -1},   {FeatureLabel::CSBF, -1, -1},
    {FeatureLabel::val, -1, -1},       {FeatureLabel::TrIntraY, 1, 4},
    {FeatureLabel::TrIntraC, 1, 4},    {FeatureLabel::TrInterY, 1, 4},
    {FeatureLabel::TrInterC, 1, 4},    {FeatureLabel::TSF, -1, -1},
    {FeatureLabel::Bs0, -1, -1},       {FeatureLabel::Bs1, -1, -1},
    {FeatureLabel::Bs2, -1, -1},       {FeatureLabel::SAO_Y_BO, -1, -1},
    {FeatureLabel::SAO_Y_EO, -1, -1},  {FeatureLabel::SAO_C_BO, -1, -1},
    {FeatureLabel::SAO_C_EO, -1, -1},  {FeatureLabel::SAO_allComps, -1, -1},
};

inline constexpr CatalogRow kFsRows[] = {
    {FeatureLabel::E0, -1, -1},         {FeatureLabel::Islice, -1, -1},
    {FeatureLabel::PBslice, -1, -1},    {FeatureLabel::intraCU, -1, -1},
    {FeatureLabel::all, 1, 4},          {FeatureLabel::skip, 0, 3},
    {FeatureLabel::interCU, 0, 3},      {FeatureLabel::fracpelAvg, -1, -1},
    {FeatureLabel::bi, -1, -1},         {FeatureLabel::coeff, -1, -1},
    {FeatureLabel::val, -1, -1},        {FeatureLabel::Tr, 1, 4},
    {FeatureLabel::Bs, -1, -1},         {FeatureLabel::SAO_Y, -1, -1},
    {FeatureLabel::SAO_C, -1, -1},
};

inline std::vector<FeatureId> expand(std::span<const CatalogRow> rows) {
    std::vector<FeatureId> ids;
    for (const auto& r : rows) {
        if (r.depth_lo < 0) {
            ids.push_back({r.label, -1});
        } else {
            for (int d = r.depth_lo; d <= r.depth_hi; ++d) ids.push_back({r.label, d});
        }
    }
    return ids;
}

// index_of lookup: [label][depth+1], -1 when the id is not in the catalogue.
struct CatalogIndex {
    std::array<std::array<int, 6>, kNumFeatureLabels> idx;
    explicit CatalogIndex(const std::vector<FeatureId>& ids) {
        for (auto& row : idx) row.fill(-1);
        for (std::size_t i = 0; i < ids.size(); ++i)
            idx[static_cast<int>(ids[i].label)][ids[i].depth + 1] = static_cast<int>(i);
    }
};

} // namespace detail

/// Canonical id list (table row order, depth ascending): 90 ids for FA, 27 for FS.
inline const std::vector<FeatureId>& catalog(FeatureKind kind) {
    static const std::vector<FeatureId> fa = detail::expand(detail::kFaRows);
    static const std::vector<FeatureId> fs = detail::expand(detail::kFsRows);
    return kind == FeatureKind::FA ? fa : fs;
}

/// Position of (label, depth) in the catalogue, or -1 if absent.
inline int index_of(FeatureKind kind, FeatureLabel label, int depth = -1) {
    static const detail::CatalogIndex fa(catalog(FeatureKind::FA));
    static const detail::CatalogIndex fs(catalog(FeatureKind::FS));
    const auto& ci = kind == FeatureKind::FA ? fa : fs;
    return ci.idx[static_cast<int>(label)][depth + 1];
}

class FeatureVector {
public:
    explicit FeatureVector(FeatureKind kind)
        : kind_(kind), counts_(catalog(kind).size(), 0.0) {}

    FeatureKind kind() const { return kind_; }
    std::size_t size() const { return counts_.size(); }
    std::span<const double> counts() const { return counts_; }
    std::span<double> counts() { return counts_; }

    double at(FeatureLabel label, int depth = -1) const {
        return counts_[checked_index(label, depth)];
    }
    double& at(FeatureLabel label, int depth = -1) { return counts_[checked_index(label, depth)]; }
    double at(const FeatureId& id) const { return at(id.label, id.depth); }
    double& at(const FeatureId& id) { return at(id.label, id.depth); }

    bool operator==(const FeatureVector&) const = default;

private:
    std::size_t checked_index(FeatureLabel label, int depth) const {
        const int i = index_of(kind_, label, depth);
        if (i < 0)
            throw DataError(Errc::DimensionMismatch,
                            "feature " + to_string(FeatureId{label, depth}) + " is not in the " +
                                std::string(to_string(kind_)) + " set");
        return static_cast<std::size_t>(i);
    }

    FeatureKind kind_;
    std::vector<double> counts_;
};

/// Parse-cost weight of an Exp-Golomb coded value v: log2(v + 2).
inline double log2_value_cost(std::int64_t v) { return std::log2(static_cast<double>(v) + 2.0); }

/// Fixed-point variant: position of the highest set bit of v+2, refined by
/// +0.585 when the next lower bit is also set.
inline double log2_value_cost_fixed_point(std::int64_t v) {
    const auto m = static_cast<std::uint64_t>(v) + 2;
    const int p = std::bit_width(m) - 1;
    double r = p;
    if (p >= 1 && ((m >> (p - 1)) & 1u)) r += 0.585;
    return r;
}

struct CountOptions {
    bool fixed_point_log = false;
};

namespace detail {

/// Euclidean remainder: result in [0, m) regardless of the sign of x.
inline int emod(int x, int m) {
    const int r = x % m;
    return r < 0 ? r + m : r;
}

} // namespace detail

/// Single pass over the trace applying the per-event counting rules.
inline FeatureVector count_features(const trace::SyntaxEventTrace& t, FeatureKind kind,
                                    CountOptions opt = {}) {
    using namespace trace;
    FeatureVector v(kind);
    const bool fa = kind == FeatureKind::FA;
    const auto logv = [&opt](std::int64_t x) {
        return opt.fixed_point_log ? log2_value_cost_fixed_point(x) : log2_value_cost(x);
    };

    for (const auto& event : t.events) {
        std::visit(
            [&](const auto& e) {
                using T = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<T, StreamBegin>) {
                    v.at(FeatureLabel::E0) += 1;
                } else if constexpr (std::is_same_v<T, Slice>) {
                    v.at(e.type == SliceType::I ? FeatureLabel::Islice : FeatureLabel::PBslice) += 1;
                } else if constexpr (std::is_same_v<T, CuIntra>) {
                    v.at(FeatureLabel::intraCU) += 1;
                } else if constexpr (std::is_same_v<T, CuInter>) {
                    if (!fa) v.at(FeatureLabel::interCU, e.depth) += 1;
                } else if constexpr (std::is_same_v<T, CuSkip>) {
                    v.at(FeatureLabel::skip, e.depth) += 1;
                } else if constexpr (std::is_same_v<T, IntraLumaMode>) {
                    if (fa) {
                        FeatureLabel l;
                        if (e.mode == 0) l = FeatureLabel::pla;
                        else if (e.mode == 1) l = FeatureLabel::dc;
                        else if (e.mode == 2 || e.mode == 10 || e.mode == 26 || e.mode == 34)
                            l = FeatureLabel::hvd;
                        else l = FeatureLabel::ang;
                        v.at(l, e.depth) += 1;
                        if (!e.mpm_hit) v.at(FeatureLabel::noMPM) += 1;
                    } else {
                        v.at(FeatureLabel::all, e.depth) += 1;
                    }
                } else if constexpr (std::is_same_v<T, PuInter>) {
                    if (fa) {
                        FeatureLabel l;
                        if (e.part_mode == 0)
                            l = e.merge ? FeatureLabel::merge : FeatureLabel::inter;
                        else if (e.part_mode <= 2)
                            l = e.merge ? FeatureLabel::mergeSMP : FeatureLabel::interSMP;
                        else
                            l = e.merge ? FeatureLabel::mergeAMP : FeatureLabel::interAMP;
                        v.at(l, e.depth) += 1;
                    }
                } else if constexpr (std::is_same_v<T, MotionVector>) {
                    const bool frac_x = detail::emod(e.mv_x, 4) != 0;
                    const bool frac_y = detail::emod(e.mv_y, 4) != 0;
                    const double pels = static_cast<double>(e.pb_w) * e.pb_h;
                    if (fa) {
                        if (frac_y) v.at(FeatureLabel::fracpelVer, e.depth) += pels;
                        if (frac_x) {
                            v.at(FeatureLabel::fracpelHor, e.depth) += pels;
                            // both directions fractional: six extra rows of
                            // horizontally filtered pels feed the vertical pass
                            if (frac_y) v.at(FeatureLabel::fracpelHor, e.depth) += 6.0 * e.pb_w;
                        }
                        const double chroma_pels = (e.pb_w / 2.0) * (e.pb_h / 2.0);
                        if (detail::emod(e.mv_x, 8) == 4)
                            v.at(FeatureLabel::chrHalfpel, e.depth) += chroma_pels;
                        if (detail::emod(e.mv_y, 8) == 4)
                            v.at(FeatureLabel::chrHalfpel, e.depth) += chroma_pels;
                    } else {
                        double sum = 0.0;
                        if (frac_y) sum += pels;
                        if (frac_x) sum += pels + (frac_y ? 6.0 * e.pb_w : 0.0);
                        v.at(FeatureLabel::fracpelAvg) += sum;
                    }
                } else if constexpr (std::is_same_v<T, BiPu>) {
                    v.at(FeatureLabel::bi) += (e.pb_w / 4.0) * (e.pb_h / 4.0);
                } else if constexpr (std::is_same_v<T, MvdLarge>) {
                    if (fa) v.at(FeatureLabel::MVD) += logv(e.abs_mvd_minus2);
                } else if constexpr (std::is_same_v<T, Coeff>) {
                    v.at(FeatureLabel::coeff) += 1;
                } else if constexpr (std::is_same_v<T, CoeffG1>) {
                    if (fa) v.at(FeatureLabel::coeffg1) += 1;
                } else if constexpr (std::is_same_v<T, CsbfNonDc>) {
                    if (fa) v.at(FeatureLabel::CSBF) += 1;
                } else if constexpr (std::is_same_v<T, CoeffRemaining>) {
                    v.at(FeatureLabel::val) += logv(e.value);
                } else if constexpr (std::is_same_v<T, Cbf>) {
                    // chroma transform blocks are one size smaller
                    const int d = e.plane == Plane::Y ? e.depth : std::min(e.depth + 1, 4);
                    if (fa) {
                        const FeatureLabel l =
                            e.intra ? (e.plane == Plane::Y ? FeatureLabel::TrIntraY
                                                           : FeatureLabel::TrIntraC)
                                    : (e.plane == Plane::Y ? FeatureLabel::TrInterY
                                                           : FeatureLabel::TrInterC);
                        v.at(l, d) += 1;
                    } else {
                        v.at(FeatureLabel::Tr, d) += 1;
                    }
                } else if constexpr (std::is_same_v<T, TransformSkip>) {
                    if (fa) v.at(FeatureLabel::TSF) += 1;
                } else if constexpr (std::is_same_v<T, BoundaryStrength>) {
                    if (fa) {
                        v.at(e.bs == 0 ? FeatureLabel::Bs0
                                       : e.bs == 1 ? FeatureLabel::Bs1 : FeatureLabel::Bs2) += 1;
                    } else {
                        v.at(FeatureLabel::Bs) += 1;
                    }
                } else if constexpr (std::is_same_v<T, SaoCtu>) {
                    if (fa) {
                        if (e.type_y == 1) v.at(FeatureLabel::SAO_Y_BO) += 1;
                        if (e.type_y == 2) v.at(FeatureLabel::SAO_Y_EO) += 1;
                        if (e.type_cb == 1) v.at(FeatureLabel::SAO_C_BO) += 1;
                        if (e.type_cb == 2) v.at(FeatureLabel::SAO_C_EO) += 1;
                        if (e.type_cr == 1) v.at(FeatureLabel::SAO_C_BO) += 1;
                        if (e.type_cr == 2) v.at(FeatureLabel::SAO_C_EO) += 1;
                        if (e.type_y != 0 && e.type_cb != 0 && e.type_cr != 0)
                            v.at(FeatureLabel::SAO_allComps) += 1;
                    } else {
                        if (e.type_y != 0) v.at(FeatureLabel::SAO_Y) += 1;
                        if (e.type_cb != 0) v.at(FeatureLabel::SAO_C) += 1;
                        if (e.type_cr != 0) v.at(FeatureLabel::SAO_C) += 1;
                    }
                }
            },
            event);
    }
    return v;
}

struct AggregationResult {
    FeatureVector vec;
    std::vector<FeatureId> non_derivable; // FS ids an FA vector cannot produce
};

/// Collapses an FA vector onto the FS ids that are sums or pass-throughs of
/// FA counters. interCU(d) has no FA counterpart and is reported as missing.
inline AggregationResult aggregate_fa_to_fs(const FeatureVector& fa) {
    if (fa.kind() != FeatureKind::FA)
        throw DataError(Errc::WrongKind, "aggregate_fa_to_fs needs an FA vector");
    AggregationResult r{FeatureVector(FeatureKind::FS), {}};
    FeatureVector& fs = r.vec;
    using L = FeatureLabel;

    for (L l : {L::E0, L::Islice, L::PBslice, L::intraCU, L::bi, L::coeff, L::val})
        fs.at(l) = fa.at(l);
    for (int d = 0; d <= 3; ++d) fs.at(L::skip, d) = fa.at(L::skip, d);
    for (int d = 1; d <= 4; ++d)
        fs.at(L::all, d) = fa.at(L::pla, d) + fa.at(L::dc, d) + fa.at(L::hvd, d) + fa.at(L::ang, d);
    double frac = 0.0;
    for (int d = 0; d <= 3; ++d) frac += fa.at(L::fracpelVer, d) + fa.at(L::fracpelHor, d);
    fs.at(L::fracpelAvg) = frac;
    for (int d = 1; d <= 4; ++d)
        fs.at(L::Tr, d) = fa.at(L::TrIntraY, d) + fa.at(L::TrIntraC, d) + fa.at(L::TrInterY, d) +
                          fa.at(L::TrInterC, d);
    fs.at(L::Bs) = fa.at(L::Bs0) + fa.at(L::Bs1) + fa.at(L::Bs2);
    fs.at(L::SAO_Y) = fa.at(L::SAO_Y_BO) + fa.at(L::SAO_Y_EO);
    fs.at(L::SAO_C) = fa.at(L::SAO_C_BO) + fa.at(L::SAO_C_EO);

    for (int d = 0; d <= 3; ++d) r.non_derivable.push_back({L::interCU, d});
    return r;
}

} // namespace decwatt::features

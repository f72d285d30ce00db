#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decwatt/errors.hpp"
#include "decwatt/features.hpp"

namespace decwatt::models {

enum class ModelId { FA, FS, PE, M, T, H1T, H2T, H2, H3 };

inline std::string_view to_string(ModelId id) {
    switch (id) {
    case ModelId::FA: return "FA";
    case ModelId::FS: return "FS";
    case ModelId::PE: return "PE";
    case ModelId::M: return "M";
    case ModelId::T: return "T";
    case ModelId::H1T: return "H1T";
    case ModelId::H2T: return "H2T";
    case ModelId::H2: return "H2";
    default: return "H3";
    }
}

inline std::optional<ModelId> model_from_string(std::string_view s) {
    for (ModelId id : {ModelId::FA, ModelId::FS, ModelId::PE, ModelId::M, ModelId::T, ModelId::H1T,
                       ModelId::H2T, ModelId::H2, ModelId::H3})
        if (s == to_string(id)) return id;
    return std::nullopt;
}

struct PeCounts {
    double instruction_fetches = 0;
    double l1d_misses = 0;
    bool operator==(const PeCounts&) const = default;
};

struct MemCounts {
    double ram_reads = 0;  // n_ra
    double ram_writes = 0; // n_wa
    bool operator==(const MemCounts&) const = default;
};

/// High-level per-bit-stream variables. Optionals are the execution-dependent
/// quantities that exist only when the stream was run (or profiled) on the
/// target device.
struct BitstreamMeta {
    std::int64_t frame_size_s = 0;     // pixels per frame
    int num_frames_n = 0;
    double frame_rate_f = 0;           // Hz
    int qp = 0;
    double bitrate_b = 0;              // bit/s
    double bits_per_pixel = 0;
    double intra_fraction_alpha = 0;   // fraction of intra coded frames
    std::optional<double> decode_time_s;
    std::optional<PeCounts> pe;
    std::optional<MemCounts> mem;
    bool operator==(const BitstreamMeta&) const = default;
};

/// One MARS basis function: a constant or a hinge on a single PE variable.
struct HingeTerm {
    enum class Kind { Constant, HingeAbove, HingeBelow }; // max(0,x-k) / max(0,k-x)
    Kind kind = Kind::Constant;
    int variable_index = 0;
    double knot = 0;
    double coefficient = 0;
    bool operator==(const HingeTerm&) const = default;

    double evaluate(std::span<const double> x) const {
        switch (kind) {
        case Kind::Constant: return 1.0;
        case Kind::HingeAbove: return std::max(0.0, x[static_cast<std::size_t>(variable_index)] - knot);
        default: return std::max(0.0, knot - x[static_cast<std::size_t>(variable_index)]);
        }
    }
};

struct Normalizers {
    double s_max = 0;
    double f_max = 0;
    double q_min = 0;
    bool operator==(const Normalizers&) const = default;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string fold_spec;      // "full" or "fold k/N"
    std::string dataset_digest; // hex fingerprint of the training file
    bool operator==(const Provenance&) const = default;
};

/// Fitted parameter count per model ("# par." of the model summary table);
/// -1 for PE, whose MARS basis is data-dependent.
inline int parameter_count(ModelId id) {
    switch (id) {
    case ModelId::FA: return 90;
    case ModelId::FS: return 27;
    case ModelId::PE: return -1;
    case ModelId::M: return 2;
    case ModelId::T: return 2;
    case ModelId::H1T: return 7; // P_max, c_S, c_f, c_q + the three normalizers
    case ModelId::H2T: return 4;
    case ModelId::H2: return 4;
    default: return 4;
    }
}

inline std::vector<std::string> parameter_names(ModelId id) {
    switch (id) {
    case ModelId::FA:
    case ModelId::FS: {
        std::vector<std::string> names;
        const auto kind = id == ModelId::FA ? features::FeatureKind::FA : features::FeatureKind::FS;
        for (const auto& fid : features::catalog(kind)) names.push_back("e_" + to_string(fid));
        return names;
    }
    case ModelId::PE: return {};
    case ModelId::M: return {"e_ra", "e_wa"};
    case ModelId::T: return {"E_0", "P_mean"};
    case ModelId::H1T: return {"P_max", "c_S", "c_f", "c_q", "S_max", "f_max", "q_min"};
    case ModelId::H2T:
    case ModelId::H2: return {"c1", "c2", "c3", "c4"};
    default: return {"C", "h3_alpha", "h3_beta", "gamma"};
    }
}

struct TrainedModel {
    ModelId id = ModelId::FS;
    std::vector<std::string> param_names;
    std::vector<double> params;
    std::optional<Normalizers> normalizers; // H1T only
    std::vector<HingeTerm> mars_basis;      // PE only
    Provenance provenance;
    bool operator==(const TrainedModel&) const = default;
};

// ---------------------------------------------------------------------------
// predictors

/// Linear feature model: sum of feature counts times specific energies.
/// Energies may be negative (SAO_allComps is).
inline double predict_feature_linear(const features::FeatureVector& fv,
                                     std::span<const double> energies) {
    if (energies.size() != fv.size())
        throw DataError(Errc::DimensionMismatch,
                        "feature vector has " + std::to_string(fv.size()) + " entries, parameter vector " +
                            std::to_string(energies.size()));
    double e = 0.0;
    const auto counts = fv.counts();
    for (std::size_t i = 0; i < counts.size(); ++i) e += counts[i] * energies[i];
    return e;
}

inline double predict_mars(const BitstreamMeta& meta, std::span<const HingeTerm> basis) {
    if (!meta.pe)
        throw DataError(Errc::MissingVariables, "PE model needs processor event counts");
    const double x[2] = {meta.pe->instruction_fetches, meta.pe->l1d_misses};
    double e = 0.0;
    for (const auto& term : basis) e += term.coefficient * term.evaluate(x);
    return e;
}

/// Reduced RAM model: read and write access energies only (idle and refresh
/// terms are stationary and excluded from the decoding energy).
inline double predict_ram(const BitstreamMeta& meta, double e_ra, double e_wa) {
    if (!meta.mem)
        throw DataError(Errc::MissingVariables, "M model needs memory access counts");
    return e_ra * meta.mem->ram_reads + e_wa * meta.mem->ram_writes;
}

inline double predict_time(const BitstreamMeta& meta, double e0, double p_mean) {
    if (!meta.decode_time_s)
        throw DataError(Errc::MissingVariables, "T model needs the decoding time");
    return e0 + p_mean * *meta.decode_time_s;
}

struct H1tParams {
    double p_max = 0;
    double c_s = 0;
    double c_f = 0;
    double c_q = 0;
};

/// Power-law power model times decoding time. Ratios may exceed 1 on
/// validation data; only the normalizers themselves must be positive.
inline double predict_h1t(const BitstreamMeta& meta, const H1tParams& p, const Normalizers& n) {
    if (!meta.decode_time_s)
        throw DataError(Errc::MissingVariables, "H1T model needs the decoding time");
    if (n.s_max <= 0 || n.f_max <= 0 || n.q_min <= 0)
        throw DataError(Errc::NonPositiveNormalizer, "H1T normalizers must be positive");
    const double power = p.p_max * std::pow(static_cast<double>(meta.frame_size_s) / n.s_max, p.c_s) *
                         std::pow(meta.frame_rate_f / n.f_max, p.c_f) *
                         std::pow(static_cast<double>(meta.qp) / n.q_min, p.c_q);
    return power * *meta.decode_time_s;
}

inline double predict_h2t(const BitstreamMeta& meta, std::span<const double, 4> c) {
    if (!meta.decode_time_s)
        throw DataError(Errc::MissingVariables, "H2T model needs the decoding time");
    const double a = meta.intra_fraction_alpha;
    const double b = meta.bitrate_b;
    return (c[0] * a * b + c[1] * a + c[2] * b + c[3]) * *meta.decode_time_s;
}

inline double predict_h2(const BitstreamMeta& meta, std::span<const double, 4> c) {
    const double a = meta.intra_fraction_alpha;
    const double bp = meta.bits_per_pixel;
    const double pixels = static_cast<double>(meta.num_frames_n) * static_cast<double>(meta.frame_size_s);
    return (c[0] * a * bp + c[1] * a + c[2] * bp + c[3]) * pixels;
}

struct H3Params {
    double c = 0;
    double h3_alpha = 0;
    double h3_beta = 0;
    double gamma = 0;
};

inline double predict_h3(const BitstreamMeta& meta, const H3Params& p) {
    const double bp = meta.bits_per_pixel;
    if (bp < 0 || (bp == 0 && p.gamma < 0))
        throw NumericError(Errc::DomainError, "H3: bits per pixel outside the power-law domain");
    const double pixels = static_cast<double>(meta.num_frames_n) * static_cast<double>(meta.frame_size_s);
    return p.c + pixels * (p.h3_alpha + p.h3_beta * std::pow(bp, p.gamma));
}

// ---------------------------------------------------------------------------
// model metadata and dispatch

struct VariableRequirements {
    std::vector<std::string> variables;
    bool execution_required; // must the stream be decoded/profiled on the device
};

inline VariableRequirements variables_required(ModelId id) {
    switch (id) {
    case ModelId::FA:
    case ModelId::FS: {
        std::vector<std::string> names;
        const auto kind = id == ModelId::FA ? features::FeatureKind::FA : features::FeatureKind::FS;
        for (const auto& fid : features::catalog(kind)) names.push_back("n_" + to_string(fid));
        return {std::move(names), false};
    }
    case ModelId::PE: return {{"pe_if", "pe_l1dm"}, true};
    case ModelId::M: return {{"n_ra", "n_wa"}, true};
    case ModelId::T: return {{"t_dec"}, true};
    case ModelId::H1T: return {{"S", "f", "q", "t_dec"}, true};
    case ModelId::H2T: return {{"alpha", "b", "t_dec"}, true};
    case ModelId::H2: return {{"alpha", "b_pixel", "N", "S"}, false};
    default: return {{"b_pixel", "N", "S"}, false};
    }
}

/// Predicts from a raw parameter vector (the layout of TrainedModel.params).
/// PE is excluded: its parameters are the basis terms, use predict_mars.
inline double predict_with_params(ModelId id, std::span<const double> params,
                                  const BitstreamMeta& meta,
                                  const features::FeatureVector* fv = nullptr) {
    const int arity = parameter_count(id);
    if (arity >= 0 && static_cast<int>(params.size()) != arity)
        throw DataError(Errc::DimensionMismatch,
                        std::string(to_string(id)) + " expects " + std::to_string(arity) +
                            " parameters, got " + std::to_string(params.size()));
    switch (id) {
    case ModelId::FA:
    case ModelId::FS:
        if (!fv) throw DataError(Errc::MissingVariables, "feature model needs a feature vector");
        return predict_feature_linear(*fv, params);
    case ModelId::M: return predict_ram(meta, params[0], params[1]);
    case ModelId::T: return predict_time(meta, params[0], params[1]);
    case ModelId::H1T:
        return predict_h1t(meta, {params[0], params[1], params[2], params[3]},
                           {params[4], params[5], params[6]});
    case ModelId::H2T: return predict_h2t(meta, params.subspan<0, 4>());
    case ModelId::H2: return predict_h2(meta, params.subspan<0, 4>());
    case ModelId::H3: return predict_h3(meta, {params[0], params[1], params[2], params[3]});
    default:
        throw DataError(Errc::DimensionMismatch, "PE prediction goes through predict_mars");
    }
}

inline double predict(const TrainedModel& m, const BitstreamMeta& meta,
                      const features::FeatureVector* fv = nullptr) {
    if (m.id == ModelId::PE) return predict_mars(meta, m.mars_basis);
    if ((m.id == ModelId::FA || m.id == ModelId::FS) && fv) {
        const auto want =
            m.id == ModelId::FA ? features::FeatureKind::FA : features::FeatureKind::FS;
        if (fv->kind() != want)
            throw DataError(Errc::DimensionMismatch,
                            std::string(to_string(m.id)) + " model cannot score a " +
                                std::string(to_string(fv->kind())) + " feature vector");
    }
    return predict_with_params(m.id, m.params, meta, fv);
}

} // namespace decwatt::models

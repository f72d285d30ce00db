#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "decwatt/dataset.hpp"
#include "decwatt/errors.hpp"
#include "decwatt/features.hpp"
#include "decwatt/fit.hpp"
#include "decwatt/random.hpp"
#include "decwatt/trace.hpp"

namespace decwatt::simlab {

struct PowerTrace {
    double sample_period_s = 0;
    std::vector<double> samples_w;
};

/// Trapezoidal integral of (P_dec - P_idle) over the shared time grid. Both
/// traces must cover the same interval on the same grid. May be negative if
/// idle exceeds decode; the caller decides what that means.
inline double integrate_decoding_energy(const PowerTrace& dec, const PowerTrace& idle) {
    if (dec.sample_period_s <= 0 || idle.sample_period_s <= 0)
        throw DataError(Errc::MismatchedTraces, "sample period must be positive");
    if (dec.samples_w.size() < 2 || idle.samples_w.size() < 2)
        throw DataError(Errc::MismatchedTraces, "power traces need at least 2 samples");
    if (dec.sample_period_s != idle.sample_period_s || dec.samples_w.size() != idle.samples_w.size())
        throw DataError(Errc::MismatchedTraces, "decode and idle traces must share grid and duration");
    for (const auto* t : {&dec, &idle})
        for (double w : t->samples_w)
            if (!std::isfinite(w) || w < 0)
                throw DataError(Errc::DomainError, "power samples must be finite and non-negative");
    double acc = 0;
    for (std::size_t i = 0; i + 1 < dec.samples_w.size(); ++i) {
        const double d0 = dec.samples_w[i] - idle.samples_w[i];
        const double d1 = dec.samples_w[i + 1] - idle.samples_w[i + 1];
        acc += 0.5 * (d0 + d1) * dec.sample_period_s;
    }
    return acc;
}

namespace detail {

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double incbeta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 3e-15;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) return h;
    }
    throw NumericError(Errc::DomainError, "incomplete beta continued fraction did not converge");
}

/// Regularized incomplete beta I_x(a, b).
inline double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * incbeta_cf(a, b, x) / a;
    return 1.0 - bt * incbeta_cf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, int dof) {
    const double v = static_cast<double>(dof);
    const double x = v / (v + t * t);
    const double half_tail = 0.5 * reg_incomplete_beta(v / 2.0, 0.5, x);
    return t >= 0 ? 1.0 - half_tail : half_tail;
}

} // namespace detail

/// Two-sided critical t-value: the quantile with probability mass alpha
/// inside [-t, t]. Found by bisection on the CDF to 1e-8.
inline double student_t_critical(double alpha, int dof) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw NumericError(Errc::DomainError, "alpha must be in (0, 1)");
    if (dof < 1) throw NumericError(Errc::DomainError, "degrees of freedom must be >= 1");
    const double p = 1.0 - (1.0 - alpha) / 2.0;
    double lo = 0.0;
    double hi = 1.0;
    while (detail::student_t_cdf(hi, dof) < p) {
        hi *= 2.0;
        if (hi > 1e12) throw NumericError(Errc::DomainError, "t quantile out of range");
    }
    for (int i = 0; i < 200 && hi - lo > 1e-9; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (detail::student_t_cdf(mid, dof) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct MeasurementRecord {
    std::string stream_id;
    std::vector<double> samples_j;
    double mean = 0;
    double stddev = 0; // sample standard deviation, n-1 denominator
    int m = 0;
    bool accepted = false;
    double delta_c = 0;
};

inline MeasurementRecord make_record(std::string stream_id, std::vector<double> samples) {
    MeasurementRecord r;
    r.stream_id = std::move(stream_id);
    r.samples_j = std::move(samples);
    r.m = static_cast<int>(r.samples_j.size());
    if (r.m == 0) return r;
    double acc = 0;
    for (double s : r.samples_j) acc += s;
    r.mean = acc / r.m;
    if (r.m >= 2) {
        double ss = 0;
        for (double s : r.samples_j) ss += (s - r.mean) * (s - r.mean);
        r.stddev = std::sqrt(ss / (r.m - 1));
    }
    return r;
}

struct CiDecision {
    bool accepted = false;
    double delta_c = 0;
};

/// Confidence-interval stopping rule: the width of the two-sided interval,
/// delta_c = 2 (sigma/sqrt(m)) t_alpha(m-1), must drop below beta times the
/// running mean.
inline CiDecision ci_stop_decision(const MeasurementRecord& record, double alpha = 0.99,
                                   double beta = 0.02) {
    if (record.m < 2) throw DataError(Errc::TooFewSamples, "CI decision needs at least 2 samples");
    if (!(record.mean > 0))
        throw DataError(Errc::NonPositiveMean, "CI decision needs a positive mean");
    const double t = student_t_critical(alpha, record.m - 1);
    const double delta_c = 2.0 * (record.stddev / std::sqrt(record.m)) * t;
    return {delta_c < beta * record.mean, delta_c};
}

/// Repeats noisy measurements of one true energy until the CI rule accepts
/// or max_m samples were taken. The optional outlier rule mirrors the noisy
/// desktop setup: samples more than 3 running standard deviations from the
/// running mean are discarded.
inline MeasurementRecord simulate_measurement_series(double true_energy, double noise_rel_sigma,
                                                     std::uint64_t seed, double alpha = 0.99,
                                                     double beta = 0.02, int max_m = 100,
                                                     bool drop_outliers = false) {
    if (!(true_energy > 0))
        throw DataError(Errc::NonPositiveMean, "true energy must be positive");
    if (noise_rel_sigma < 0) throw DataError(Errc::ConfigInvalid, "noise must be >= 0");
    Rng rng(seed);
    MeasurementRecord record;
    int attempts = 0;
    const int max_attempts = max_m * 10 + 10;
    while (record.m < max_m && attempts < max_attempts) {
        ++attempts;
        double sample = true_energy * (1.0 + noise_rel_sigma * rng.normal());
        while (sample <= 0) sample = true_energy * (1.0 + noise_rel_sigma * rng.normal());
        if (drop_outliers && record.m >= 2 && record.stddev > 0 &&
            std::abs(sample - record.mean) > 3.0 * record.stddev)
            continue;
        auto samples = record.samples_j;
        samples.push_back(sample);
        record = make_record(record.stream_id, std::move(samples));
        if (record.m >= 2) {
            const auto decision = ci_stop_decision(record, alpha, beta);
            record.accepted = decision.accepted;
            record.delta_c = decision.delta_c;
            if (decision.accepted) break;
        }
    }
    return record;
}

// ---------------------------------------------------------------------------
// ground-truth dataset generation

struct GeneratorConfig {
    models::ModelId model_id = models::ModelId::FS;
    std::uint64_t seed = 0;
    double noise_rel_sigma = 0.0; // multiplicative Gaussian on the true energy
    int trace_events_min = 60;    // per coded frame, feature models only
    int trace_events_max = 200;
    std::vector<int> qps = {10, 32, 45};
    int frames_max = 8;
    bool use_measurement_protocol = false;
    double ci_alpha = 0.99;
    double ci_beta = 0.02;
    int ci_max_m = 64;
    bool drop_outliers = false;
    std::optional<std::vector<double>> hidden_params; // fixed truth instead of a drawn one
};

struct HiddenTruth {
    models::TrainedModel model;
    double noise_rel_sigma = 0;
    std::uint64_t seed = 0;
};

struct GeneratedDataset {
    fit::Dataset dataset;
    HiddenTruth truth;
};

namespace detail {

struct SequenceSpec {
    const char* name;
    int width;
    int height;
    double frame_rate;
};

// the standard evaluation pool: class A..F sequences and their resolutions
inline constexpr SequenceSpec kSequencePool[] = {
    {"PeopleOnStreet", 2560, 1600, 30.0}, {"Traffic", 2560, 1600, 30.0},
    {"Kimono", 1920, 1080, 24.0},         {"RaceHorsesC", 832, 480, 30.0},
    {"BasketballPass", 416, 240, 50.0},   {"BlowingBubbles", 416, 240, 50.0},
    {"BQSquare", 416, 240, 60.0},         {"RaceHorsesD", 416, 240, 30.0},
    {"vidyo3", 1280, 720, 60.0},          {"SlideEditing", 1280, 720, 30.0},
};

inline constexpr const char* kConfigs[] = {"intra", "lowdelay", "lowdelay_P", "randomaccess"};

inline double log_uniform(Rng& rng, double lo, double hi) {
    return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

} // namespace detail

/// Synthesizes a dataset from a hidden model of the requested kind, plus that
/// hidden truth for oracle tests. Rows enumerate (sequence, config, qp)
/// groups with frame counts 1..frames_max, so frame-level differencing is
/// exercisable; resolutions come from the standard pool only.
inline GeneratedDataset generate_dataset(const GeneratorConfig& config, int n_rows) {
    using models::ModelId;
    if (n_rows < 1) throw DataError(Errc::ConfigInvalid, "n_rows must be >= 1");
    if (config.noise_rel_sigma < 0) throw DataError(Errc::ConfigInvalid, "noise must be >= 0");
    if (config.trace_events_min < 1 || config.trace_events_max < config.trace_events_min)
        throw DataError(Errc::ConfigInvalid, "trace event range is inconsistent");
    if (config.qps.empty()) throw DataError(Errc::ConfigInvalid, "qps must not be empty");
    if (config.frames_max < 1) throw DataError(Errc::ConfigInvalid, "frames_max must be >= 1");

    Rng rng(config.seed);
    const bool feature_model = config.model_id == ModelId::FA || config.model_id == ModelId::FS;
    const auto kind =
        config.model_id == ModelId::FA ? features::FeatureKind::FA : features::FeatureKind::FS;

    // phase 1: enumerate rows, draw meta (and, for feature models, traces)
    fit::Dataset data;
    std::vector<features::FeatureVector> row_features;
    int emitted = 0;
    for (std::size_t group = 0; emitted < n_rows; ++group) {
        const auto& seq = detail::kSequencePool[group % std::size(detail::kSequencePool)];
        const auto* cfg = detail::kConfigs[(group / std::size(detail::kSequencePool)) %
                                           std::size(detail::kConfigs)];
        const int qp = config.qps[(group / (std::size(detail::kSequencePool) *
                                            std::size(detail::kConfigs))) %
                                  config.qps.size()];
        // past one full sweep of the pool, suffix the sequence name so group
        // keys and stream ids stay unique
        const auto sweep = group / (std::size(detail::kSequencePool) * std::size(detail::kConfigs) *
                                    config.qps.size());
        std::string seq_name = seq.name;
        if (sweep > 0) seq_name += "#" + std::to_string(sweep + 1);
        const bool intra_only = std::string_view(cfg) == "intra";
        const auto s = static_cast<std::int64_t>(seq.width) * seq.height;

        // per-sequence coding cost draws shared by the whole group
        const double bpp_intra = detail::log_uniform(rng, 0.1, 1.5) * std::exp2((32.0 - qp) / 8.0);
        const double bpp_inter = bpp_intra * (intra_only ? 1.0 : detail::log_uniform(rng, 0.1, 0.4));
        const double cost_per_pixel = detail::log_uniform(rng, 1e-8, 5e-8) * (1.0 + 10.0 / (qp + 5.0));

        std::vector<trace::SyntaxEvent> accumulated;
        for (int n = 1; n <= config.frames_max && emitted < n_rows; ++n, ++emitted) {
            fit::DatasetRow row;
            row.group = {seq_name, cfg, qp};
            row.frame_count = n;
            row.stream_id = seq_name + "_" + cfg + "_qp" + std::to_string(qp) + "_f" +
                            std::to_string(n);
            auto& meta = row.meta;
            meta.frame_size_s = s;
            meta.num_frames_n = n;
            meta.frame_rate_f = seq.frame_rate;
            meta.qp = qp;
            meta.intra_fraction_alpha = intra_only ? 1.0 : 1.0 / n;
            const double intra_frames = intra_only ? n : 1.0;
            const double total_bits =
                static_cast<double>(s) * (intra_frames * bpp_intra + (n - intra_frames) * bpp_inter);
            meta.bits_per_pixel = total_bits / (static_cast<double>(s) * n);
            meta.bitrate_b = total_bits * seq.frame_rate / n;
            meta.decode_time_s =
                static_cast<double>(s) * n * cost_per_pixel * (1.0 + 0.3 * rng.uniform01());
            meta.pe = models::PeCounts{50.0 * static_cast<double>(s) * n * (1.0 + 0.5 * rng.uniform01()),
                                       0.5 * static_cast<double>(s) * n * (1.0 + 0.5 * rng.uniform01())};
            meta.mem = models::MemCounts{0.8 * static_cast<double>(s) * n * (1.0 + 0.5 * rng.uniform01()),
                                         0.5 * static_cast<double>(s) * n * (1.0 + 0.5 * rng.uniform01())};

            if (feature_model) {
                const int frame_events = static_cast<int>(
                    rng.uniform_int(config.trace_events_min, config.trace_events_max));
                auto frame =
                    trace::generate_random_trace(rng.next_u64(), frame_events);
                accumulated.insert(accumulated.end(), frame.events.begin() + 1, frame.events.end());
                trace::SyntaxEventTrace cumulative;
                cumulative.stream_id = row.stream_id;
                cumulative.events.emplace_back(trace::StreamBegin{});
                cumulative.events.insert(cumulative.events.end(), accumulated.begin(),
                                         accumulated.end());
                row.features = features::count_features(cumulative, kind);
                row_features.push_back(*row.features);
            }
            data.rows.push_back(std::move(row));
        }
    }

    // phase 2: hidden truth (may inspect the drawn metas)
    HiddenTruth truth;
    truth.seed = config.seed;
    truth.noise_rel_sigma = config.noise_rel_sigma;
    truth.model.id = config.model_id;
    truth.model.param_names = models::parameter_names(config.model_id);
    truth.model.provenance.fold_spec = "generator";
    truth.model.provenance.seed = config.seed;

    if (config.model_id == ModelId::PE) {
        // Affine in the two PE counts, written as hinges with knots below the
        // data. An interior knot would sit between observed values and could
        // never be recovered exactly (fitting restricts knots to observed
        // values, and a CV fold can hold out the knot's row), which would
        // break the noise-0 round-trip guarantee.
        std::vector<models::HingeTerm> basis;
        basis.push_back({models::HingeTerm::Kind::Constant, 0, 0.0, rng.uniform(0.5, 2.0)});
        for (int v = 0; v < 2; ++v) {
            double hi = 0;
            for (const auto& row : data.rows) {
                const double x = v == 0 ? row.meta.pe->instruction_fetches : row.meta.pe->l1d_misses;
                hi = std::max(hi, x);
            }
            const double slope = detail::log_uniform(rng, 0.3, 3.0) / (hi + 1.0);
            basis.push_back({models::HingeTerm::Kind::HingeAbove, v, 0.0, slope});
        }
        truth.model.mars_basis = basis;
        for (const auto& term : basis) truth.model.params.push_back(term.coefficient);
    } else if (config.hidden_params) {
        const int want = models::parameter_count(config.model_id);
        if (static_cast<int>(config.hidden_params->size()) != want)
            throw DataError(Errc::ConfigInvalid, "hidden_params must have " + std::to_string(want) +
                                                     " entries for " +
                                                     std::string(models::to_string(config.model_id)));
        truth.model.params = *config.hidden_params;
    } else {
        switch (config.model_id) {
        case ModelId::FA:
        case ModelId::FS: {
            for (const auto& id : features::catalog(kind)) {
                double e;
                if (id.label == features::FeatureLabel::E0) e = rng.uniform(0.1, 0.5);
                else if (id.label == features::FeatureLabel::SAO_allComps)
                    e = -detail::log_uniform(rng, 1e-5, 1e-3);
                else e = detail::log_uniform(rng, 1e-5, 1e-2);
                truth.model.params.push_back(e);
            }
            break;
        }
        case ModelId::M:
            truth.model.params = {detail::log_uniform(rng, 1e-9, 1e-7),
                                  detail::log_uniform(rng, 1e-9, 1e-7)};
            break;
        case ModelId::T:
            truth.model.params = {rng.uniform(0.05, 0.5), rng.uniform(0.3, 3.0)};
            break;
        case ModelId::H1T: {
            double s_max = 0, f_max = 0, q_min = 1e9;
            for (const auto& row : data.rows) {
                s_max = std::max(s_max, static_cast<double>(row.meta.frame_size_s));
                f_max = std::max(f_max, row.meta.frame_rate_f);
                q_min = std::min(q_min, static_cast<double>(row.meta.qp));
            }
            truth.model.params = {rng.uniform(0.5, 3.0), rng.uniform(0.3, 1.0),
                                  rng.uniform(0.0, 0.5), rng.uniform(-0.8, -0.1),
                                  s_max, f_max, q_min};
            truth.model.normalizers = models::Normalizers{s_max, f_max, q_min};
            break;
        }
        case ModelId::H2T:
            truth.model.params = {detail::log_uniform(rng, 3e-8, 3e-7), rng.uniform(0.05, 0.5),
                                  detail::log_uniform(rng, 3e-8, 3e-7), rng.uniform(0.05, 0.5)};
            break;
        case ModelId::H2:
            truth.model.params = {detail::log_uniform(rng, 1e-7, 1e-6), detail::log_uniform(rng, 1e-7, 1e-6),
                                  detail::log_uniform(rng, 1e-7, 1e-6), detail::log_uniform(rng, 1e-7, 1e-6)};
            break;
        default: // H3
            truth.model.params = {rng.uniform(0.0, 0.5), detail::log_uniform(rng, 1e-7, 1e-6),
                                  detail::log_uniform(rng, 1e-7, 1e-6), rng.uniform(0.6, 1.3)};
            break;
        }
    }
    if (config.model_id == ModelId::H1T && config.hidden_params)
        truth.model.normalizers = models::Normalizers{truth.model.params[4], truth.model.params[5],
                                                      truth.model.params[6]};

    // phase 3: true energies, then measurement noise
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        auto& row = data.rows[i];
        const double e_true = models::predict(truth.model, row.meta,
                                              feature_model ? &row_features[i] : nullptr);
        if (!(e_true > 0))
            throw NumericError(Errc::DomainError,
                               "hidden model produced a non-positive energy for '" + row.stream_id +
                                   "'; adjust the generator configuration");
        if (config.use_measurement_protocol) {
            const auto record = simulate_measurement_series(
                e_true, config.noise_rel_sigma, rng.next_u64(), config.ci_alpha, config.ci_beta,
                config.ci_max_m, config.drop_outliers);
            row.energy_j = record.mean;
        } else if (config.noise_rel_sigma > 0) {
            double e = e_true * (1.0 + config.noise_rel_sigma * rng.normal());
            while (e <= 0) e = e_true * (1.0 + config.noise_rel_sigma * rng.normal());
            row.energy_j = e;
        } else {
            row.energy_j = e_true;
        }
    }

    return {std::move(data), std::move(truth)};
}

} // namespace decwatt::simlab

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "decwatt/dataset.hpp"
#include "decwatt/errors.hpp"
#include "decwatt/fit.hpp"
#include "decwatt/random.hpp"

namespace decwatt::eval {

/// Signed relative estimation error (estimate - measured) / measured.
inline double relative_error(double estimate, double measured) {
    if (!(measured > 0))
        throw DataError(Errc::NonPositiveEnergy, "relative error needs a positive measured energy");
    return (estimate - measured) / measured;
}

inline double mean_abs_error(std::span<const double> errors) {
    if (errors.empty()) throw DataError(Errc::EmptyList, "mean_abs_error of an empty list");
    double acc = 0;
    for (double e : errors) acc += std::abs(e);
    return acc / static_cast<double>(errors.size());
}

struct CvReport {
    models::ModelId model_id = models::ModelId::FS;
    std::uint64_t seed = 0;
    int folds = 0;
    std::vector<std::vector<double>> per_fold_errors;       // held-out epsilon per fold
    std::vector<std::vector<std::string>> per_fold_streams; // parallel stream ids
    std::map<std::string, int> fold_assignment;
    double mean_abs_error = 0;
};

/// Seeded 10-fold cross-validation: a Fisher-Yates permutation of the row
/// indices is dealt round-robin into folds (sizes differ by at most one),
/// each fold is scored by the model trained on the remaining folds.
inline CvReport cross_validate(const fit::Dataset& data, models::ModelId id, std::uint64_t seed,
                               int folds = 10, fit::FitOptions opt = {}) {
    const auto n = data.rows.size();
    if (folds < 2) throw DataError(Errc::TooFewRows, "cross-validation needs at least 2 folds");
    if (n < static_cast<std::size_t>(folds))
        throw DataError(Errc::TooFewRows, "need at least " + std::to_string(folds) + " rows, got " +
                                              std::to_string(n));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));

    CvReport report;
    report.model_id = id;
    report.seed = seed;
    report.folds = folds;
    report.per_fold_errors.resize(static_cast<std::size_t>(folds));
    report.per_fold_streams.resize(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < n; ++i)
        report.fold_assignment[data.rows[i].stream_id] = fold_of[i];

    std::vector<double> all_errors;
    all_errors.reserve(n);
    for (int f = 0; f < folds; ++f) {
        fit::Dataset train;
        std::vector<std::size_t> held_out;
        for (std::size_t i = 0; i < n; ++i) {
            if (fold_of[i] == f) held_out.push_back(i);
            else train.rows.push_back(data.rows[i]);
        }
        auto fitted = fit::fit_model(train, id, opt);
        fitted.model.provenance.fold_spec =
            "fold " + std::to_string(f + 1) + "/" + std::to_string(folds);
        for (std::size_t i : held_out) {
            const auto& row = data.rows[i];
            const double est = models::predict(fitted.model, row.meta,
                                               row.features ? &*row.features : nullptr);
            const double eps = relative_error(est, row.energy_j);
            report.per_fold_errors[static_cast<std::size_t>(f)].push_back(eps);
            report.per_fold_streams[static_cast<std::size_t>(f)].push_back(row.stream_id);
            all_errors.push_back(eps);
        }
    }
    report.mean_abs_error = mean_abs_error(all_errors);
    return report;
}

struct FrameLevelResult {
    fit::Dataset dataset;
    int dropped_nonpositive = 0;      // differenced rows with delta E <= 0
    int negative_feature_deltas = 0;  // count deltas below -1e-9, reported and clamped
};

/// Frame-level rows: within each (sequence, config, qp) group the n-frame
/// stream minus the (n-1)-frame stream. Extensive variables (energy, time,
/// bits, event counts, feature counts) are differenced, intensive ones
/// (resolution, frame rate, QP) pass through; the 1-frame row is already
/// frame level and passes through whole.
inline FrameLevelResult frame_level_energies(const fit::Dataset& data) {
    std::map<fit::GroupKey, std::vector<const fit::DatasetRow*>> groups;
    for (const auto& row : data.rows) {
        if (row.frame_count < 1)
            throw DataError(Errc::MissingFrameCount,
                            "row '" + row.stream_id + "': frame_count must be >= 1");
        groups[row.group].push_back(&row);
    }

    FrameLevelResult out;
    for (auto& [key, rows] : groups) {
        std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
            return a->frame_count < b->frame_count;
        });
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i]->frame_count != static_cast<int>(i) + 1)
                throw DataError(Errc::NonMonotoneGroup,
                                "group '" + key.sequence + "/" + key.config + "/qp" +
                                    std::to_string(key.qp) +
                                    "': frame counts must run 1..n without gaps");
        }

        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& cur = *rows[i];
            if (i == 0) {
                out.dataset.rows.push_back(cur);
                continue;
            }
            const auto& prev = *rows[i - 1];
            const double delta_e = cur.energy_j - prev.energy_j;
            if (!(delta_e > 0)) {
                ++out.dropped_nonpositive;
                continue;
            }
            fit::DatasetRow d = cur;
            d.energy_j = delta_e;
            d.meta.num_frames_n = 1;

            const double s = static_cast<double>(cur.meta.frame_size_s);
            const double bits_cur = cur.meta.bits_per_pixel * s * cur.meta.num_frames_n;
            const double bits_prev = prev.meta.bits_per_pixel * s * prev.meta.num_frames_n;
            const double delta_bits = bits_cur - bits_prev;
            d.meta.bits_per_pixel = delta_bits / s;
            d.meta.bitrate_b = d.meta.bits_per_pixel * s * cur.meta.frame_rate_f;

            const double intra_cur = cur.meta.intra_fraction_alpha * cur.meta.num_frames_n;
            const double intra_prev = prev.meta.intra_fraction_alpha * prev.meta.num_frames_n;
            d.meta.intra_fraction_alpha = std::clamp(intra_cur - intra_prev, 0.0, 1.0);

            if (cur.meta.decode_time_s && prev.meta.decode_time_s)
                d.meta.decode_time_s = *cur.meta.decode_time_s - *prev.meta.decode_time_s;
            else
                d.meta.decode_time_s.reset();
            if (cur.meta.pe && prev.meta.pe)
                d.meta.pe = models::PeCounts{
                    cur.meta.pe->instruction_fetches - prev.meta.pe->instruction_fetches,
                    cur.meta.pe->l1d_misses - prev.meta.pe->l1d_misses};
            else
                d.meta.pe.reset();
            if (cur.meta.mem && prev.meta.mem)
                d.meta.mem = models::MemCounts{cur.meta.mem->ram_reads - prev.meta.mem->ram_reads,
                                               cur.meta.mem->ram_writes - prev.meta.mem->ram_writes};
            else
                d.meta.mem.reset();

            if (cur.features && prev.features) {
                if (cur.features->kind() != prev.features->kind())
                    throw DataError(Errc::DimensionMismatch,
                                    "row '" + cur.stream_id +
                                        "': feature kind differs from the previous frame count");
                auto counts = d.features->counts();
                const auto prev_counts = prev.features->counts();
                for (std::size_t j = 0; j < counts.size(); ++j) {
                    counts[j] -= prev_counts[j];
                    if (counts[j] < -1e-9) ++out.negative_feature_deltas;
                    if (counts[j] < 0) counts[j] = 0;
                }
            } else {
                d.features.reset(); // differencing needs both sides
            }
            out.dataset.rows.push_back(std::move(d));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// report rendering

struct ReportCell {
    std::string system;
    models::ModelId model = models::ModelId::FS;
    double mean_abs_error = 0;
};

/// "6.27" for 0.0627; the tables and CSVs use two decimals throughout.
inline std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

namespace detail {

struct ReportGrid {
    std::vector<std::string> systems;
    std::vector<models::ModelId> model_order;
    std::map<std::pair<std::string, models::ModelId>, double> cells;
};

inline ReportGrid make_grid(std::span<const ReportCell> cells) {
    ReportGrid g;
    for (const auto& c : cells) {
        if (std::find(g.systems.begin(), g.systems.end(), c.system) == g.systems.end())
            g.systems.push_back(c.system);
        g.cells[{c.system, c.model}] = c.mean_abs_error;
    }
    using models::ModelId;
    for (ModelId id : {ModelId::FA, ModelId::FS, ModelId::PE, ModelId::M, ModelId::T, ModelId::H1T,
                       ModelId::H2T, ModelId::H2, ModelId::H3}) {
        for (const auto& c : cells)
            if (c.model == id) {
                g.model_order.push_back(id);
                break;
            }
    }
    return g;
}

} // namespace detail

/// Systems-by-models grid of mean absolute relative errors in percent, with
/// row and column averages. Missing cells render as "-" and are skipped in
/// the averages.
inline std::string render_report_text(std::span<const ReportCell> cells) {
    const auto g = detail::make_grid(cells);
    std::size_t label_w = std::string("system").size();
    for (const auto& s : g.systems) label_w = std::max(label_w, s.size());

    const auto pad = [](std::string s, std::size_t w) {
        while (s.size() < w) s.push_back(' ');
        return s;
    };
    constexpr std::size_t col_w = 8;

    std::string out = pad("system", label_w + 2);
    for (auto id : g.model_order) out += pad(std::string(models::to_string(id)), col_w);
    out += "avg\n";

    std::vector<double> col_sum(g.model_order.size(), 0.0);
    std::vector<int> col_n(g.model_order.size(), 0);
    for (const auto& sys : g.systems) {
        out += pad(sys, label_w + 2);
        double row_sum = 0;
        int row_n = 0;
        for (std::size_t j = 0; j < g.model_order.size(); ++j) {
            const auto it = g.cells.find({sys, g.model_order[j]});
            if (it == g.cells.end()) {
                out += pad("-", col_w);
                continue;
            }
            out += pad(format_percent(it->second) + "%", col_w);
            row_sum += it->second;
            ++row_n;
            col_sum[j] += it->second;
            ++col_n[j];
        }
        out += row_n > 0 ? format_percent(row_sum / row_n) + "%" : "-";
        out += '\n';
    }
    out += pad("avg", label_w + 2);
    for (std::size_t j = 0; j < g.model_order.size(); ++j)
        out += pad(col_n[j] > 0 ? format_percent(col_sum[j] / col_n[j]) + "%" : "-", col_w);
    out += '\n';
    return out;
}

inline std::string render_report_csv(std::span<const ReportCell> cells) {
    const auto g = detail::make_grid(cells);
    std::string out = "system,model,mean_abs_error_percent\n";
    for (const auto& sys : g.systems)
        for (auto id : g.model_order) {
            const auto it = g.cells.find({sys, id});
            if (it == g.cells.end()) continue;
            out += sys;
            out += ',';
            out += models::to_string(id);
            out += ',';
            out += format_percent(it->second);
            out += '\n';
        }
    return out;
}

} // namespace decwatt::eval

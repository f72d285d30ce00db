#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "decwatt/dataset.hpp"
#include "decwatt/errors.hpp"
#include "decwatt/eval.hpp"
#include "decwatt/features.hpp"
#include "decwatt/models.hpp"
#include "decwatt/simlab.hpp"
#include "decwatt/textutil.hpp"
#include "decwatt/trace.hpp"

namespace decwatt::io {

using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(Errc::ConfigInvalid, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(Errc::ConfigInvalid, "cannot write " + path.string());
    out << content;
}

inline trace::SyntaxEventTrace read_trace_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(Errc::ConfigInvalid, "cannot open " + path.string());
    return trace::parse_trace(in, path.stem().string());
}

// ---------------------------------------------------------------------------
// feature vector CSV: feature,depth,count — canonical catalogue order

inline std::string write_feature_csv(const features::FeatureVector& v) {
    std::string out = "feature,depth,count\n";
    const auto& ids = features::catalog(v.kind());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out += features::label_name(ids[i].label);
        out += ',';
        if (ids[i].depth >= 0) out += std::to_string(ids[i].depth);
        out += ',';
        out += format_double(v.counts()[i]);
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline features::FeatureKind kind_from_id_count(std::size_t n, const std::string& context) {
    if (n == features::catalog(features::FeatureKind::FA).size()) return features::FeatureKind::FA;
    if (n == features::catalog(features::FeatureKind::FS).size()) return features::FeatureKind::FS;
    throw DataError(Errc::DimensionMismatch,
                    context + ": " + std::to_string(n) + " feature rows match neither FA nor FS");
}

} // namespace detail

inline features::FeatureVector read_feature_csv(const std::string& text, const std::string& context) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || detail::split_csv_line(line) !=
                                       std::vector<std::string>{"feature", "depth", "count"})
        throw DataError(Errc::MalformedLine, context + ": expected header feature,depth,count");
    std::vector<std::pair<std::string, int>> ids;
    std::vector<double> counts;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 3)
            throw DataError(Errc::MalformedLine,
                            context + ":" + std::to_string(line_no) + ": expected 3 cells");
        const int depth = cells[1].empty()
                              ? -1
                              : static_cast<int>(parse_int(cells[1], context + " depth"));
        ids.emplace_back(cells[0], depth);
        const double count = parse_double(cells[2], context + " count");
        if (!std::isfinite(count) || count < 0)
            throw DataError(Errc::RangeViolation,
                            context + ":" + std::to_string(line_no) + ": counts must be finite and >= 0");
        counts.push_back(count);
    }
    const auto kind = detail::kind_from_id_count(ids.size(), context);
    const auto& want = features::catalog(kind);
    features::FeatureVector v(kind);
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (ids[i].first != features::label_name(want[i].label) || ids[i].second != want[i].depth)
            throw DataError(Errc::DimensionMismatch,
                            context + ": feature row " + std::to_string(i + 1) + " is '" +
                                ids[i].first + "', expected '" +
                                std::string(features::label_name(want[i].label)) + "'");
        v.counts()[i] = counts[i];
    }
    return v;
}

// ---------------------------------------------------------------------------
// features matrix CSV: stream_id plus one column per catalogue id

inline std::string write_features_matrix(const std::vector<std::pair<std::string, features::FeatureVector>>& rows,
                                         features::FeatureKind kind) {
    std::string out = "stream_id";
    for (const auto& id : features::catalog(kind)) {
        out += ',';
        out += features::to_string(id);
    }
    out += '\n';
    for (const auto& [stream_id, v] : rows) {
        if (v.kind() != kind)
            throw DataError(Errc::WrongKind, "features matrix row '" + stream_id + "' kind mismatch");
        out += stream_id;
        for (double c : v.counts()) {
            out += ',';
            out += format_double(c);
        }
        out += '\n';
    }
    return out;
}

inline std::map<std::string, features::FeatureVector>
read_features_matrix(const std::string& text, const std::string& context) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw DataError(Errc::MalformedLine, context + ": empty features matrix");
    const auto header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "stream_id")
        throw DataError(Errc::MalformedLine, context + ": first column must be stream_id");
    const auto kind = detail::kind_from_id_count(header.size() - 1, context);
    const auto& ids = features::catalog(kind);
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (header[i + 1] != features::to_string(ids[i]))
            throw DataError(Errc::DimensionMismatch,
                            context + ": column " + std::to_string(i + 2) + " is '" + header[i + 1] +
                                "', expected '" + features::to_string(ids[i]) + "'");
    std::map<std::string, features::FeatureVector> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError(Errc::MalformedLine, context + ":" + std::to_string(line_no) +
                                                     ": wrong cell count");
        features::FeatureVector v(kind);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const double count = parse_double(cells[i + 1], context + ":" + std::to_string(line_no));
            if (!std::isfinite(count) || count < 0)
                throw DataError(Errc::RangeViolation, context + ":" + std::to_string(line_no) +
                                                          ": counts must be finite and >= 0");
            v.counts()[i] = count;
        }
        out.insert_or_assign(cells[0], std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset CSV

inline constexpr const char* kDatasetHeader =
    "stream_id,sequence,config,qp,frame_count,S,N,f,b,b_pixel,alpha,t_dec,pe_if,pe_l1dm,n_ra,n_wa,"
    "energy_J";

inline std::string write_dataset_csv(const fit::Dataset& data) {
    std::string out = std::string(kDatasetHeader) + "\n";
    for (const auto& row : data.rows) {
        const auto& m = row.meta;
        out += row.stream_id;
        out += ',' + row.group.sequence + ',' + row.group.config + ',' + std::to_string(row.group.qp);
        out += ',' + std::to_string(row.frame_count);
        out += ',' + std::to_string(m.frame_size_s);
        out += ',' + std::to_string(m.num_frames_n);
        out += ',' + format_double(m.frame_rate_f);
        out += ',' + format_double(m.bitrate_b);
        out += ',' + format_double(m.bits_per_pixel);
        out += ',' + format_double(m.intra_fraction_alpha);
        out += ',';
        if (m.decode_time_s) out += format_double(*m.decode_time_s);
        out += ',';
        if (m.pe) out += format_double(m.pe->instruction_fetches);
        out += ',';
        if (m.pe) out += format_double(m.pe->l1d_misses);
        out += ',';
        if (m.mem) out += format_double(m.mem->ram_reads);
        out += ',';
        if (m.mem) out += format_double(m.mem->ram_writes);
        out += ',' + format_double(row.energy_j);
        out += '\n';
    }
    return out;
}

inline fit::Dataset read_dataset_csv(const std::string& text, const std::string& context) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw DataError(Errc::MalformedLine, context + ": empty dataset");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kDatasetHeader)
        throw DataError(Errc::MalformedLine,
                        context + ": unexpected header, want '" + std::string(kDatasetHeader) + "'");
    fit::Dataset data;
    std::set<std::string> seen_ids;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c = detail::split_csv_line(line);
        const std::string at = context + ":" + std::to_string(line_no);
        if (c.size() != 17)
            throw DataError(Errc::MalformedLine, at + ": expected 17 cells, got " +
                                                     std::to_string(c.size()));
        fit::DatasetRow row;
        row.stream_id = c[0];
        if (!seen_ids.insert(row.stream_id).second)
            throw DataError(Errc::MalformedLine, at + ": duplicate stream_id '" + row.stream_id + "'");
        row.group = {c[1], c[2], static_cast<int>(parse_int(c[3], at + " qp"))};
        row.frame_count = static_cast<int>(parse_int(c[4], at + " frame_count"));
        row.meta.frame_size_s = parse_int(c[5], at + " S");
        row.meta.num_frames_n = static_cast<int>(parse_int(c[6], at + " N"));
        if (row.meta.frame_size_s < 1 || row.meta.num_frames_n < 1)
            throw DataError(Errc::MalformedLine, at + ": S and N must be >= 1");
        row.meta.frame_rate_f = parse_double(c[7], at + " f");
        row.meta.bitrate_b = parse_double(c[8], at + " b");
        row.meta.bits_per_pixel = parse_double(c[9], at + " b_pixel");
        row.meta.intra_fraction_alpha = parse_double(c[10], at + " alpha");
        row.meta.qp = row.group.qp;
        if (!c[11].empty()) row.meta.decode_time_s = parse_double(c[11], at + " t_dec");
        if (c[12].empty() != c[13].empty())
            throw DataError(Errc::MalformedLine, at + ": pe_if and pe_l1dm must come together");
        if (!c[12].empty())
            row.meta.pe = models::PeCounts{parse_double(c[12], at + " pe_if"),
                                           parse_double(c[13], at + " pe_l1dm")};
        if (c[14].empty() != c[15].empty())
            throw DataError(Errc::MalformedLine, at + ": n_ra and n_wa must come together");
        if (!c[14].empty())
            row.meta.mem = models::MemCounts{parse_double(c[14], at + " n_ra"),
                                             parse_double(c[15], at + " n_wa")};
        row.energy_j = parse_double(c[16], at + " energy_J");
        if (!std::isfinite(row.energy_j) || row.energy_j <= 0)
            throw DataError(Errc::NonPositiveEnergy, at + ": energy_J must be finite and > 0");
        data.rows.push_back(std::move(row));
    }
    return data;
}

/// Joins a features matrix onto dataset rows by stream id. Rows without a
/// matching matrix entry keep an empty feature slot; the fit layer reports
/// them if the chosen model needs features.
inline void attach_features(fit::Dataset& data,
                            const std::map<std::string, features::FeatureVector>& matrix) {
    for (auto& row : data.rows) {
        const auto it = matrix.find(row.stream_id);
        if (it != matrix.end()) row.features = it->second;
    }
}

// ---------------------------------------------------------------------------
// trained model JSON

inline ordered_json model_to_json(const models::TrainedModel& m) {
    ordered_json j;
    j["model_id"] = std::string(models::to_string(m.id));
    ordered_json params = ordered_json::array();
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        ordered_json p;
        p["name"] = i < m.param_names.size() ? m.param_names[i] : "p" + std::to_string(i);
        p["value"] = m.params[i];
        params.push_back(std::move(p));
    }
    j["parameters"] = std::move(params);
    if (m.normalizers) {
        j["normalizers"] = {{"S_max", m.normalizers->s_max},
                            {"f_max", m.normalizers->f_max},
                            {"q_min", m.normalizers->q_min}};
    }
    if (!m.mars_basis.empty()) {
        ordered_json basis = ordered_json::array();
        for (const auto& term : m.mars_basis) {
            ordered_json t;
            t["kind"] = term.kind == models::HingeTerm::Kind::Constant ? "constant"
                        : term.kind == models::HingeTerm::Kind::HingeAbove ? "hinge_above"
                                                                           : "hinge_below";
            if (term.kind != models::HingeTerm::Kind::Constant) {
                t["variable_index"] = term.variable_index;
                t["knot"] = term.knot;
            }
            t["coefficient"] = term.coefficient;
            basis.push_back(std::move(t));
        }
        j["mars_basis"] = std::move(basis);
    }
    j["provenance"] = {{"seed", m.provenance.seed},
                       {"fold_spec", m.provenance.fold_spec},
                       {"dataset_digest", m.provenance.dataset_digest}};
    return j;
}

inline models::TrainedModel model_from_json(const ordered_json& j, const std::string& context) {
    try {
        models::TrainedModel m;
        const auto id = models::model_from_string(j.at("model_id").get<std::string>());
        if (!id) throw DataError(Errc::ConfigInvalid, context + ": unknown model_id");
        m.id = *id;
        for (const auto& p : j.at("parameters")) {
            m.param_names.push_back(p.at("name").get<std::string>());
            m.params.push_back(p.at("value").get<double>());
        }
        if (j.contains("normalizers")) {
            const auto& n = j.at("normalizers");
            m.normalizers = models::Normalizers{n.at("S_max").get<double>(),
                                                n.at("f_max").get<double>(),
                                                n.at("q_min").get<double>()};
        }
        if (j.contains("mars_basis")) {
            for (const auto& t : j.at("mars_basis")) {
                models::HingeTerm term;
                const auto kind = t.at("kind").get<std::string>();
                term.kind = kind == "constant" ? models::HingeTerm::Kind::Constant
                            : kind == "hinge_above" ? models::HingeTerm::Kind::HingeAbove
                                                    : models::HingeTerm::Kind::HingeBelow;
                if (term.kind != models::HingeTerm::Kind::Constant) {
                    term.variable_index = t.at("variable_index").get<int>();
                    term.knot = t.at("knot").get<double>();
                }
                term.coefficient = t.at("coefficient").get<double>();
                m.mars_basis.push_back(term);
            }
        }
        if (j.contains("provenance")) {
            const auto& p = j.at("provenance");
            m.provenance.seed = p.at("seed").get<std::uint64_t>();
            m.provenance.fold_spec = p.at("fold_spec").get<std::string>();
            m.provenance.dataset_digest = p.at("dataset_digest").get<std::string>();
        }
        const int arity = models::parameter_count(m.id);
        if (arity >= 0 && static_cast<int>(m.params.size()) != arity)
            throw DataError(Errc::DimensionMismatch,
                            context + ": parameter count does not match the model arity");
        return m;
    } catch (const ordered_json::exception& e) {
        throw DataError(Errc::ConfigInvalid, context + ": bad model document: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// cross-validation report JSON

inline ordered_json cv_report_to_json(const eval::CvReport& r, const std::string& system) {
    ordered_json j;
    j["system"] = system;
    j["model_id"] = std::string(models::to_string(r.model_id));
    j["seed"] = r.seed;
    j["folds"] = r.folds;
    j["mean_abs_error"] = r.mean_abs_error;
    ordered_json assignment = ordered_json::object();
    for (const auto& [stream, fold] : r.fold_assignment) assignment[stream] = fold;
    j["fold_assignment"] = std::move(assignment);
    ordered_json folds = ordered_json::array();
    for (std::size_t f = 0; f < r.per_fold_errors.size(); ++f) {
        ordered_json fold = ordered_json::array();
        for (std::size_t i = 0; i < r.per_fold_errors[f].size(); ++i) {
            ordered_json row;
            row["stream_id"] = r.per_fold_streams[f][i];
            row["error"] = r.per_fold_errors[f][i];
            fold.push_back(std::move(row));
        }
        folds.push_back(std::move(fold));
    }
    j["per_fold"] = std::move(folds);
    return j;
}

inline ordered_json truth_to_json(const simlab::HiddenTruth& truth) {
    ordered_json j;
    j["hidden_model"] = model_to_json(truth.model);
    j["noise_rel_sigma"] = truth.noise_rel_sigma;
    j["seed"] = truth.seed;
    return j;
}

// ---------------------------------------------------------------------------
// key=value config files (simulate)

inline std::map<std::string, std::string> parse_keyvalue(const std::string& text,
                                                         const std::string& context) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos || line[begin] == '#') continue;
        const auto eq = line.find('=', begin);
        if (eq == std::string::npos)
            throw DataError(Errc::ConfigInvalid,
                            context + ":" + std::to_string(line_no) + ": expected key=value");
        auto key = line.substr(begin, eq - begin);
        auto value = line.substr(eq + 1);
        const auto trim = [](std::string& s) {
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
        };
        trim(key);
        trim(value);
        out[key] = value;
    }
    return out;
}

inline std::string dataset_digest(const std::string& csv_bytes) {
    const std::uint64_t h = fnv1a64(csv_bytes.data(), csv_bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace decwatt::io

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "decwatt/dataset.hpp"
#include "decwatt/errors.hpp"
#include "decwatt/models.hpp"
#include "decwatt/textutil.hpp"

namespace decwatt::fit {

struct FitOptions {
    std::optional<std::vector<double>> init;         // trust-region start point (free params)
    std::optional<std::vector<std::pair<double, double>>> bounds; // per free param
    int max_iterations = 500;
    double gradient_tol = 1e-9;
    double step_tol = 1e-12;
    double fd_relative_step = 1e-7;
    // MARS
    int max_terms = 21;
    double gcv_penalty = 3.0;
    bool absolute_residuals = false;
};

struct FitResult {
    models::TrainedModel model;
    double objective_value = 0; // sum of squared relative residuals
    int iterations = 0;
    bool converged = false;
    // trust region: objective at each accepted iterate; MARS: the GCV score
    // after the forward pass and after each backward removal. Non-increasing
    // in both cases.
    std::vector<double> objective_history;
};

namespace detail {

inline void require_positive_energies(const Dataset& data) {
    if (data.rows.empty()) throw DataError(Errc::InsufficientRows, "dataset is empty");
    for (const auto& row : data.rows)
        if (!(row.energy_j > 0) || !std::isfinite(row.energy_j))
            throw DataError(Errc::NonPositiveEnergy,
                            "row '" + row.stream_id + "': energy must be finite and > 0");
}

inline void require_variables(const Dataset& data, models::ModelId id) {
    using models::ModelId;
    for (const auto& row : data.rows) {
        const auto missing = [&row](const char* what) {
            return DataError(Errc::MissingVariables,
                             "row '" + row.stream_id + "': missing " + std::string(what));
        };
        switch (id) {
        case ModelId::FA:
        case ModelId::FS: {
            if (!row.features) throw missing("feature vector");
            const auto want =
                id == ModelId::FA ? features::FeatureKind::FA : features::FeatureKind::FS;
            if (row.features->kind() != want)
                throw DataError(Errc::DimensionMismatch,
                                "row '" + row.stream_id + "': feature vector kind mismatch");
            break;
        }
        case ModelId::PE:
            if (!row.meta.pe) throw missing("processor event counts");
            break;
        case ModelId::M:
            if (!row.meta.mem) throw missing("memory access counts");
            break;
        case ModelId::T:
        case ModelId::H1T:
        case ModelId::H2T:
            if (!row.meta.decode_time_s) throw missing("decoding time");
            break;
        default: break;
        }
    }
}

/// Design-matrix row for the models that are linear in their parameters.
inline void linear_columns(models::ModelId id, const DatasetRow& row, std::vector<double>& out) {
    using models::ModelId;
    out.clear();
    const auto& meta = row.meta;
    switch (id) {
    case ModelId::FA:
    case ModelId::FS: {
        const auto c = row.features->counts();
        out.assign(c.begin(), c.end());
        break;
    }
    case ModelId::M:
        out = {meta.mem->ram_reads, meta.mem->ram_writes};
        break;
    case ModelId::T:
        out = {1.0, *meta.decode_time_s};
        break;
    case ModelId::H2T: {
        const double t = *meta.decode_time_s;
        out = {meta.intra_fraction_alpha * meta.bitrate_b * t, meta.intra_fraction_alpha * t,
               meta.bitrate_b * t, t};
        break;
    }
    case ModelId::H2: {
        const double ns =
            static_cast<double>(meta.num_frames_n) * static_cast<double>(meta.frame_size_s);
        out = {meta.intra_fraction_alpha * meta.bits_per_pixel * ns,
               meta.intra_fraction_alpha * ns, meta.bits_per_pixel * ns, ns};
        break;
    }
    default:
        throw DataError(Errc::DimensionMismatch,
                        std::string(models::to_string(id)) + " is not linear in its parameters");
    }
}

inline bool is_linear_model(models::ModelId id) {
    using models::ModelId;
    switch (id) {
    case ModelId::FA:
    case ModelId::FS:
    case ModelId::M:
    case ModelId::T:
    case ModelId::H2T:
    case ModelId::H2: return true;
    default: return false;
    }
}

inline models::Normalizers normalizers_from_training(const Dataset& data) {
    models::Normalizers n{0, 0, std::numeric_limits<double>::infinity()};
    for (const auto& row : data.rows) {
        n.s_max = std::max(n.s_max, static_cast<double>(row.meta.frame_size_s));
        n.f_max = std::max(n.f_max, row.meta.frame_rate_f);
        n.q_min = std::min(n.q_min, static_cast<double>(row.meta.qp));
    }
    if (n.s_max <= 0 || n.f_max <= 0 || n.q_min <= 0)
        throw DataError(Errc::NonPositiveNormalizer,
                        "training data gives non-positive H1T normalizers");
    return n;
}

} // namespace detail

/// Relative-error least squares for the models that are linear in their
/// parameters: scaling row m by 1/E_m turns sum((y_hat-E)/E)^2 into an
/// ordinary least-squares problem with unit targets. Solved by a
/// rank-revealing complete orthogonal decomposition, so rank-deficient
/// designs get the minimum-norm solution.
inline FitResult fit_linear_relative(const Dataset& data, models::ModelId id) {
    if (!detail::is_linear_model(id))
        throw DataError(Errc::DimensionMismatch,
                        std::string(models::to_string(id)) + " has no closed-form relative fit");
    detail::require_positive_energies(data);
    detail::require_variables(data, id);

    const int p = models::parameter_count(id);
    const auto m = static_cast<Eigen::Index>(data.rows.size());
    if (m < p)
        throw DataError(Errc::InsufficientRows, "need at least " + std::to_string(p) + " rows, got " +
                                                    std::to_string(m));

    Eigen::MatrixXd a(m, p);
    std::vector<double> cols;
    for (Eigen::Index r = 0; r < m; ++r) {
        detail::linear_columns(id, data.rows[static_cast<std::size_t>(r)], cols);
        const double w = 1.0 / data.rows[static_cast<std::size_t>(r)].energy_j;
        for (int j = 0; j < p; ++j) a(r, j) = cols[static_cast<std::size_t>(j)] * w;
    }
    const Eigen::VectorXd target = Eigen::VectorXd::Ones(m);
    Eigen::VectorXd theta = a.completeOrthogonalDecomposition().solve(target);
    const double objective = (a * theta - target).squaredNorm();

    FitResult res;
    res.model.id = id;
    res.model.param_names = models::parameter_names(id);
    res.model.params.assign(theta.data(), theta.data() + theta.size());
    res.model.provenance.fold_spec = "full";
    res.objective_value = objective;
    res.iterations = 0;
    res.converged = true;
    res.objective_history = {objective};
    return res;
}

namespace detail {

struct ResidualProblem {
    const Dataset* data;
    models::ModelId id;
    std::optional<models::Normalizers> normalizers; // H1T

    int free_params() const {
        return id == models::ModelId::H1T ? 4 : models::parameter_count(id);
    }

    std::vector<double> full_params(const Eigen::VectorXd& theta) const {
        std::vector<double> p(theta.data(), theta.data() + theta.size());
        if (id == models::ModelId::H1T) {
            p.push_back(normalizers->s_max);
            p.push_back(normalizers->f_max);
            p.push_back(normalizers->q_min);
        }
        return p;
    }

    /// Relative residuals at theta; false when any prediction is outside the
    /// model domain or non-finite (the step gets rejected).
    bool evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const {
        const auto params = full_params(theta);
        const auto& rows = data->rows;
        out.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double est;
            try {
                est = models::predict_with_params(id, params, rows[i].meta,
                                                  rows[i].features ? &*rows[i].features : nullptr);
            } catch (const NumericError&) {
                return false;
            }
            if (!std::isfinite(est)) return false;
            out[static_cast<Eigen::Index>(i)] = (est - rows[i].energy_j) / rows[i].energy_j;
        }
        return true;
    }
};

/// Default starting points. H3 assumes the energy is roughly proportional to
/// the pixel count; H1T seeds the exponents with an ordinary regression in
/// log space.
inline Eigen::VectorXd default_init(const ResidualProblem& prob) {
    using models::ModelId;
    const auto& rows = prob.data->rows;
    if (prob.id == ModelId::H3) {
        double acc = 0;
        for (const auto& r : rows)
            acc += r.energy_j / (static_cast<double>(r.meta.num_frames_n) *
                                 static_cast<double>(r.meta.frame_size_s));
        const double alpha = acc / static_cast<double>(rows.size());
        Eigen::VectorXd t(4);
        t << 0.0, alpha, alpha, 1.0;
        return t;
    }
    if (prob.id == ModelId::H1T) {
        const auto& n = *prob.normalizers;
        const auto m = static_cast<Eigen::Index>(rows.size());
        Eigen::MatrixXd x(m, 4);
        Eigen::VectorXd y(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& meta = rows[static_cast<std::size_t>(i)].meta;
            x(i, 0) = 1.0;
            x(i, 1) = std::log(static_cast<double>(meta.frame_size_s) / n.s_max);
            x(i, 2) = std::log(meta.frame_rate_f / n.f_max);
            x(i, 3) = std::log(static_cast<double>(meta.qp) / n.q_min);
            y[i] = std::log(rows[static_cast<std::size_t>(i)].energy_j / *meta.decode_time_s);
        }
        Eigen::VectorXd beta = x.completeOrthogonalDecomposition().solve(y);
        Eigen::VectorXd t(4);
        t << std::exp(beta[0]), beta[1], beta[2], beta[3];
        return t;
    }
    return Eigen::VectorXd::Zero(prob.free_params());
}

inline void clip_to_bounds(Eigen::VectorXd& theta,
                           const std::vector<std::pair<double, double>>& bounds) {
    for (Eigen::Index j = 0; j < theta.size(); ++j)
        theta[j] = std::clamp(theta[j], bounds[static_cast<std::size_t>(j)].first,
                              bounds[static_cast<std::size_t>(j)].second);
}

} // namespace detail

/// Trust-region minimization of the squared-relative-residual objective with
/// a forward-difference Jacobian and reflective handling of box bounds.
/// Damped normal-equation steps are only ever accepted when they decrease the
/// objective, so the returned iterate is the best one seen. Also accepts the
/// linear model ids, which is the cross-check path against
/// fit_linear_relative.
inline FitResult fit_trust_region(const Dataset& data, models::ModelId id, FitOptions opt = {}) {
    using models::ModelId;
    if (id == ModelId::PE)
        throw DataError(Errc::DimensionMismatch, "PE is fitted by fit_mars");
    detail::require_positive_energies(data);
    detail::require_variables(data, id);

    detail::ResidualProblem prob{&data, id, std::nullopt};
    if (id == ModelId::H1T) prob.normalizers = detail::normalizers_from_training(data);
    const int p = prob.free_params();
    if (static_cast<int>(data.rows.size()) < p)
        throw DataError(Errc::InsufficientRows, "need at least " + std::to_string(p) + " rows, got " +
                                                    std::to_string(data.rows.size()));
    if (opt.bounds) {
        if (static_cast<int>(opt.bounds->size()) != p)
            throw DataError(Errc::BoundViolation, "bounds size must match the free parameter count");
        for (const auto& [lo, hi] : *opt.bounds)
            if (!(lo <= hi)) throw DataError(Errc::BoundViolation, "lower bound exceeds upper bound");
    }

    Eigen::VectorXd theta;
    if (opt.init) {
        if (static_cast<int>(opt.init->size()) != p)
            throw DataError(Errc::DimensionMismatch, "init size must match the free parameter count");
        theta = Eigen::Map<const Eigen::VectorXd>(opt.init->data(),
                                                  static_cast<Eigen::Index>(opt.init->size()));
    } else {
        theta = detail::default_init(prob);
    }
    if (opt.bounds) detail::clip_to_bounds(theta, *opt.bounds);

    Eigen::VectorXd r;
    if (!prob.evaluate(theta, r))
        throw NumericError(Errc::DomainError, "objective undefined at the starting point");
    double objective = r.squaredNorm();

    const auto m = r.size();
    Eigen::MatrixXd jac(m, p);
    Eigen::VectorXd r_probe(m), r_try(m), theta_probe(p), theta_try(p);

    FitResult res;
    res.objective_history = {objective};
    double lambda = 1e-3;
    int iter = 0;
    bool converged = false;

    while (iter < opt.max_iterations) {
        ++iter;
        // forward differences, relative step with a unit floor
        for (int j = 0; j < p; ++j) {
            double h = opt.fd_relative_step * std::max(std::abs(theta[j]), 1.0);
            if (opt.bounds && theta[j] + h > (*opt.bounds)[static_cast<std::size_t>(j)].second)
                h = -h;
            theta_probe = theta;
            theta_probe[j] += h;
            h = theta_probe[j] - theta[j];
            if (!prob.evaluate(theta_probe, r_probe)) {
                theta_probe[j] = theta[j] - h;
                h = theta_probe[j] - theta[j];
                if (!prob.evaluate(theta_probe, r_probe))
                    throw NumericError(Errc::DomainError, "objective undefined near the iterate");
            }
            jac.col(j) = (r_probe - r) / h;
        }

        const Eigen::VectorXd gradient = 2.0 * jac.transpose() * r;
        if (gradient.lpNorm<Eigen::Infinity>() < opt.gradient_tol * (1.0 + std::abs(objective))) {
            converged = true;
            break;
        }

        const Eigen::MatrixXd hessian = jac.transpose() * jac;
        Eigen::VectorXd damping = hessian.diagonal().cwiseMax(1e-12);

        bool accepted = false;
        for (int inner = 0; inner < 40 && !accepted; ++inner) {
            Eigen::MatrixXd h = hessian;
            h.diagonal() += lambda * damping;
            const Eigen::VectorXd step = h.ldlt().solve(-0.5 * gradient);
            if (step.norm() < opt.step_tol) {
                converged = true;
                break;
            }
            theta_try = theta + step;
            if (opt.bounds) {
                // reflect the crossing coordinates back into the box; fall
                // back to the clipped point when reflection does not help
                Eigen::VectorXd reflected = theta_try;
                for (int j = 0; j < p; ++j) {
                    const auto [lo, hi] = (*opt.bounds)[static_cast<std::size_t>(j)];
                    if (reflected[j] < lo) reflected[j] = std::min(2.0 * lo - reflected[j], hi);
                    else if (reflected[j] > hi) reflected[j] = std::max(2.0 * hi - reflected[j], lo);
                }
                Eigen::VectorXd clipped = theta_try;
                detail::clip_to_bounds(clipped, *opt.bounds);
                double f_reflected = std::numeric_limits<double>::infinity();
                double f_clipped = std::numeric_limits<double>::infinity();
                Eigen::VectorXd r_reflected(m);
                if (prob.evaluate(reflected, r_reflected)) f_reflected = r_reflected.squaredNorm();
                if (prob.evaluate(clipped, r_try)) f_clipped = r_try.squaredNorm();
                if (f_reflected < f_clipped) {
                    theta_try = reflected;
                    r_try = r_reflected;
                } else {
                    theta_try = clipped;
                }
                const double f_try = std::min(f_reflected, f_clipped);
                if (f_try < objective) {
                    theta = theta_try;
                    r = r_try;
                    objective = f_try;
                    res.objective_history.push_back(objective);
                    lambda = std::max(lambda / 3.0, 1e-14);
                    accepted = true;
                } else {
                    lambda *= 3.0;
                }
            } else {
                double f_try = std::numeric_limits<double>::infinity();
                if (prob.evaluate(theta_try, r_try)) f_try = r_try.squaredNorm();
                if (f_try < objective) {
                    theta = theta_try;
                    r = r_try;
                    objective = f_try;
                    res.objective_history.push_back(objective);
                    lambda = std::max(lambda / 3.0, 1e-14);
                    accepted = true;
                } else {
                    lambda *= 3.0;
                }
            }
            if (lambda > 1e15) break;
        }
        if (converged) break;
        if (!accepted) break; // no descent direction left at this scale
    }

    res.model.id = id;
    res.model.param_names = models::parameter_names(id);
    const auto full = prob.full_params(theta);
    res.model.params = full;
    if (id == ModelId::H1T) res.model.normalizers = prob.normalizers;
    res.model.provenance.fold_spec = "full";
    res.objective_value = objective;
    res.iterations = iter;
    res.converged = converged;
    return res;
}

namespace detail {

inline double mars_rss(const Eigen::VectorXd& target, const Eigen::MatrixXd& columns,
                       Eigen::VectorXd* coeffs_out) {
    Eigen::VectorXd coeffs = columns.completeOrthogonalDecomposition().solve(target);
    if (coeffs_out) *coeffs_out = coeffs;
    return (columns * coeffs - target).squaredNorm();
}

inline double gcv_score(double rss, double n_rows, double n_terms, double penalty) {
    const double c = n_terms + penalty * (n_terms - 1.0) / 2.0;
    const double denom = 1.0 - c / n_rows;
    if (denom <= 0) return std::numeric_limits<double>::infinity();
    return rss / (n_rows * denom * denom);
}

} // namespace detail

/// MARS trainer for the processor-event model: forward pass adds the
/// reflected hinge pair with the largest residual reduction (knots restricted
/// to observed values), backward pass prunes greedily by generalized
/// cross-validation. Residuals are relative by default to stay consistent
/// with the global objective; absolute_residuals switches to plain ones.
inline FitResult fit_mars(const Dataset& data, FitOptions opt = {}) {
    using models::HingeTerm;
    detail::require_positive_energies(data);
    detail::require_variables(data, models::ModelId::PE);
    const auto m = static_cast<Eigen::Index>(data.rows.size());
    if (m < 2) throw DataError(Errc::InsufficientRows, "MARS needs at least 2 rows");

    Eigen::MatrixXd x(m, 2);
    Eigen::VectorXd energy(m), weight(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& row = data.rows[static_cast<std::size_t>(i)];
        x(i, 0) = row.meta.pe->instruction_fetches;
        x(i, 1) = row.meta.pe->l1d_misses;
        energy[i] = row.energy_j;
        weight[i] = opt.absolute_residuals ? 1.0 : 1.0 / row.energy_j;
    }
    const Eigen::VectorXd target = energy.cwiseProduct(weight);

    // distinct observed values per variable are the knot candidates
    std::array<std::vector<double>, 2> knots;
    for (int v = 0; v < 2; ++v) {
        std::set<double> distinct;
        for (Eigen::Index i = 0; i < m; ++i) distinct.insert(x(i, v));
        knots[static_cast<std::size_t>(v)].assign(distinct.begin(), distinct.end());
    }

    const auto basis_column = [&](const HingeTerm& term) {
        Eigen::VectorXd col(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double xv[2] = {x(i, 0), x(i, 1)};
            col[i] = term.evaluate(xv);
        }
        return Eigen::VectorXd(col.cwiseProduct(weight));
    };

    std::vector<HingeTerm> basis{HingeTerm{}}; // constant term, never pruned
    Eigen::MatrixXd columns(m, 1);
    columns.col(0) = basis_column(basis[0]);
    Eigen::VectorXd coeffs;
    double rss = detail::mars_rss(target, columns, &coeffs);

    // forward pass
    while (static_cast<int>(basis.size()) + 2 <= opt.max_terms && rss > 1e-24) {
        double best_rss = rss;
        HingeTerm best_above, best_below;
        bool found = false;
        Eigen::MatrixXd trial(m, static_cast<Eigen::Index>(basis.size()) + 2);
        trial.leftCols(static_cast<Eigen::Index>(basis.size())) = columns;
        for (int v = 0; v < 2; ++v) {
            for (double k : knots[static_cast<std::size_t>(v)]) {
                HingeTerm above{HingeTerm::Kind::HingeAbove, v, k, 0.0};
                HingeTerm below{HingeTerm::Kind::HingeBelow, v, k, 0.0};
                trial.col(trial.cols() - 2) = basis_column(above);
                trial.col(trial.cols() - 1) = basis_column(below);
                const double cand_rss = detail::mars_rss(target, trial, nullptr);
                if (cand_rss < best_rss - 1e-12 * (1.0 + rss)) {
                    best_rss = cand_rss;
                    best_above = above;
                    best_below = below;
                    found = true;
                }
            }
        }
        if (!found) break;
        basis.push_back(best_above);
        basis.push_back(best_below);
        Eigen::MatrixXd next(m, static_cast<Eigen::Index>(basis.size()));
        next.leftCols(columns.cols()) = columns;
        next.col(next.cols() - 2) = basis_column(best_above);
        next.col(next.cols() - 1) = basis_column(best_below);
        columns.swap(next);
        rss = detail::mars_rss(target, columns, &coeffs);
    }

    // backward pass: drop the hinge whose removal lowers GCV the most
    const auto n_rows = static_cast<double>(m);
    double gcv = detail::gcv_score(rss, n_rows, static_cast<double>(basis.size()), opt.gcv_penalty);
    std::vector<double> gcv_trace{gcv};
    while (basis.size() > 1) {
        double best_gcv = gcv;
        std::size_t best_drop = 0;
        double best_rss = rss;
        for (std::size_t j = 1; j < basis.size(); ++j) {
            Eigen::MatrixXd pruned_cols(m, static_cast<Eigen::Index>(basis.size()) - 1);
            Eigen::Index c = 0;
            for (std::size_t i = 0; i < basis.size(); ++i) {
                if (i == j) continue;
                pruned_cols.col(c++) = columns.col(static_cast<Eigen::Index>(i));
            }
            const double pruned_rss = detail::mars_rss(target, pruned_cols, nullptr);
            const double pruned_gcv = detail::gcv_score(pruned_rss, n_rows,
                                                        static_cast<double>(basis.size()) - 1.0,
                                                        opt.gcv_penalty);
            if (pruned_gcv <= best_gcv) {
                best_gcv = pruned_gcv;
                best_drop = j;
                best_rss = pruned_rss;
            }
        }
        if (best_drop == 0) break;
        Eigen::MatrixXd next(m, static_cast<Eigen::Index>(basis.size()) - 1);
        Eigen::Index c = 0;
        for (std::size_t i = 0; i < basis.size(); ++i) {
            if (i == best_drop) continue;
            next.col(c++) = columns.col(static_cast<Eigen::Index>(i));
        }
        basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(best_drop));
        columns.swap(next);
        gcv = best_gcv;
        rss = best_rss;
        gcv_trace.push_back(gcv);
    }
    rss = detail::mars_rss(target, columns, &coeffs);
    for (std::size_t j = 0; j < basis.size(); ++j)
        basis[j].coefficient = coeffs[static_cast<Eigen::Index>(j)];

    FitResult res;
    res.model.id = models::ModelId::PE;
    res.model.mars_basis = basis;
    static constexpr const char* var_names[2] = {"pe_if", "pe_l1dm"};
    for (const auto& term : basis) {
        res.model.params.push_back(term.coefficient);
        switch (term.kind) {
        case HingeTerm::Kind::Constant: res.model.param_names.emplace_back("const"); break;
        case HingeTerm::Kind::HingeAbove:
            res.model.param_names.push_back("max(0," + std::string(var_names[term.variable_index]) +
                                            "-" + format_double(term.knot) + ")");
            break;
        default:
            res.model.param_names.push_back("max(0," + format_double(term.knot) + "-" +
                                            std::string(var_names[term.variable_index]) + ")");
        }
    }
    res.model.provenance.fold_spec = "full";
    res.objective_value = rss;
    res.iterations = static_cast<int>(basis.size());
    res.converged = true;
    res.objective_history = std::move(gcv_trace);
    return res;
}

/// Routes a model id to its trainer.
inline FitResult fit_model(const Dataset& data, models::ModelId id, FitOptions opt = {}) {
    using models::ModelId;
    if (id == ModelId::PE) return fit_mars(data, opt);
    if (id == ModelId::H1T || id == ModelId::H3) return fit_trust_region(data, id, opt);
    return fit_linear_relative(data, id);
}

} // namespace decwatt::fit

#pragma once

// Least-squares Monte Carlo estimates of conditional expectations given a
// decision maker's information: ridge regression of targets on polynomial
// features of the information variables, one fit per time step.

#include "teamsmp/information.hpp"
#include "teamsmp/sde.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

namespace teamsmp {

struct RegressionOptions {
    double ridge_relative = 1e-8;        // lambda = ridge_relative * trace(F'F) / p
    std::optional<double> ridge_absolute;  // overrides the relative rule when set
    bool two_fold = false;
};

struct RegressionFit {
    Matrix coefficients;  // p x q; rows of dropped columns are zero
    double ridge = 0.0;
    int time_index = 0;
    std::vector<int> kept;  // feature columns used in the solve
    bool degenerate = false;  // sample-mean fallback
    Vector residual_se;       // per target column
};

struct FitResult {
    Matrix fitted;  // M x q
    RegressionFit fit;
};

namespace detail {

inline void require_finite(const Matrix& a, const char* what, int step) {
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            if (!std::isfinite(a(r, c))) {
                std::ostringstream os;
                os << "non-finite " << what << " at row " << r << ", column " << c << " (step " << step << ")";
                throw RegressionError(os.str(), static_cast<std::size_t>(step));
            }
}

inline bool has_intercept(const Matrix& F) {
    return F.cols() > 0 && (F.col(0).array() == 1.0).all();
}

}  // namespace detail

/// Factorizes one design matrix and projects any number of target blocks
/// onto its span. Constant non-intercept columns are dropped; a design with
/// nothing but the intercept falls back to the sample mean.
class Regressor {
public:
    Regressor(const Matrix& F, const RegressionOptions& opt = {}, int step = 0)
        : F_(F), opt_(opt), step_(step) {
        detail::require_finite(F, "feature", step);
        const auto M = F.rows();
        if (M < 1) throw RegressionError("empty design", static_cast<std::size_t>(step));
        const bool icpt = detail::has_intercept(F);
        intercept_ = icpt;
        for (Eigen::Index c = 0; c < F.cols(); ++c) {
            if (icpt && c > 0) {
                const double lo = F.col(c).minCoeff(), hi = F.col(c).maxCoeff();
                if (hi - lo <= 1e-12 * (1.0 + std::abs(hi))) continue;
            }
            kept_.push_back(static_cast<int>(c));
        }
        degenerate_ = icpt && kept_.size() == 1;
        if (degenerate_) return;
        if (opt.two_fold && M >= 4) {
            folds_ = 2;
            for (int f = 0; f < 2; ++f) fold_solver(f);
        }
        solver_ = build(Eigen::VectorXi{}, ridge_);
    }

    FitResult fit(const Matrix& Y) const {
        detail::require_finite(Y, "target", step_);
        if (Y.rows() != F_.rows())
            throw RegressionError("target rows do not match the design", static_cast<std::size_t>(step_));
        FitResult out;
        out.fit.time_index = step_;
        out.fit.kept = kept_;
        out.fit.degenerate = degenerate_;
        out.fit.coefficients = Matrix::Zero(F_.cols(), Y.cols());
        if (degenerate_) {
            const Eigen::RowVectorXd mean = Y.colwise().mean();
            out.fitted = mean.replicate(Y.rows(), 1);
            out.fit.coefficients.row(0) = mean;
        } else {
            out.fit.ridge = ridge_;
            const Matrix beta = solve(solver_, Y, Eigen::VectorXi{});
            for (std::size_t j = 0; j < kept_.size(); ++j)
                out.fit.coefficients.row(kept_[j]) = beta.row(static_cast<Eigen::Index>(j));
            if (folds_ == 2) {
                out.fitted.resize(Y.rows(), Y.cols());
                for (int f = 0; f < 2; ++f) {
                    const Matrix b = solve(fold_[f].solver, Y, fold_[f].train);
                    for (Eigen::Index r = 1 - f; r < Y.rows(); r += 2)
                        out.fitted.row(r) = reduced_row(r) * b;
                }
            } else {
                out.fitted.noalias() = F_ * out.fit.coefficients;
            }
        }
        const double dof = std::max<double>(1.0, static_cast<double>(Y.rows()) -
                                                     static_cast<double>(degenerate_ ? 1 : kept_.size()));
        out.fit.residual_se = ((Y - out.fitted).colwise().squaredNorm().array() / dof).sqrt().transpose();
        return out;
    }

    Eigen::Index rows() const { return F_.rows(); }
    bool degenerate() const { return degenerate_; }

private:
    struct Fold {
        Eigen::VectorXi train;
        Eigen::LDLT<Matrix> solver;
    };

    // Rows of the reduced design selected by idx (all rows when idx is empty).
    Matrix reduced(const Eigen::VectorXi& idx) const {
        const Eigen::Index rows = idx.size() ? idx.size() : F_.rows();
        Matrix R(rows, static_cast<Eigen::Index>(kept_.size()));
        for (std::size_t j = 0; j < kept_.size(); ++j) {
            const auto c = static_cast<Eigen::Index>(j);
            if (idx.size())
                for (Eigen::Index r = 0; r < rows; ++r) R(r, c) = F_(idx[r], kept_[j]);
            else
                R.col(c) = F_.col(kept_[j]);
        }
        return R;
    }

    Eigen::RowVectorXd reduced_row(Eigen::Index r) const {
        Eigen::RowVectorXd row(static_cast<Eigen::Index>(kept_.size()));
        for (std::size_t j = 0; j < kept_.size(); ++j) row[static_cast<Eigen::Index>(j)] = F_(r, kept_[j]);
        return row;
    }

    Eigen::LDLT<Matrix> build(const Eigen::VectorXi& idx, double& lambda) const {
        const Matrix R = reduced(idx);
        Matrix G = Matrix::Zero(R.cols(), R.cols());
        G.selfadjointView<Eigen::Lower>().rankUpdate(R.transpose());
        G = G.selfadjointView<Eigen::Lower>();
        lambda = opt_.ridge_absolute ? *opt_.ridge_absolute
                                     : opt_.ridge_relative * G.trace() / static_cast<double>(G.rows());
        // The intercept is not penalized, so constants are reproduced exactly.
        const Eigen::Index skip = intercept_ ? 1 : 0;
        G.diagonal().tail(G.rows() - skip).array() += lambda;
        Eigen::LDLT<Matrix> ldlt(G);
        if (ldlt.info() != Eigen::Success)
            throw RegressionError("normal equations could not be factorized", static_cast<std::size_t>(step_));
        return ldlt;
    }

    void fold_solver(int f) {
        const Eigen::Index M = F_.rows();
        Eigen::VectorXi idx((M - f + 1) / 2);
        for (Eigen::Index r = f, j = 0; r < M; r += 2, ++j) idx[j] = static_cast<int>(r);
        double lambda = 0.0;
        fold_[f].train = idx;
        fold_[f].solver = build(idx, lambda);
    }

    Matrix solve(const Eigen::LDLT<Matrix>& s, const Matrix& Y, const Eigen::VectorXi& idx) const {
        Matrix rhs;
        if (idx.size()) {
            Matrix Ys(idx.size(), Y.cols());
            for (Eigen::Index r = 0; r < idx.size(); ++r) Ys.row(r) = Y.row(idx[r]);
            rhs = reduced(idx).transpose() * Ys;
        } else {
            rhs = reduced(idx).transpose() * Y;
        }
        Matrix beta = s.solve(rhs);
        if (!beta.allFinite())
            throw RegressionError("regression produced non-finite coefficients", static_cast<std::size_t>(step_));
        return beta;
    }

    Matrix F_;
    RegressionOptions opt_;
    int step_;
    std::vector<int> kept_;
    bool degenerate_ = false;
    bool intercept_ = false;
    double ridge_ = 0.0;
    int folds_ = 1;
    Eigen::LDLT<Matrix> solver_;
    Fold fold_[2];
};

/// Solves (F'F + lambda D) beta = F'y per target column and returns F beta,
/// where D is the identity with the intercept entry zeroed.
inline FitResult fit_predict(const Matrix& F, const Matrix& Y, const RegressionOptions& opt = {},
                             int step = 0) {
    return Regressor(F, opt, step).fit(Y);
}

/// A DM's features: a basis over its information variables.
struct FeatureMap {
    InformationStructure info;
    Basis basis = Basis::polynomial_deg2;
    int vars = 0;
    int output_dim = 0;

    Matrix expand(const Matrix& variables) const {
        return expand_basis(variables, basis, info.custom_basis);
    }
};

inline FeatureMap feature_map(const TeamProblem& p, std::size_t dm) {
    FeatureMap fm;
    fm.info = p.info[dm];
    fm.basis = fm.info.basis;
    fm.vars = make_layout(p, dm).dim;
    fm.output_dim = fm.basis == Basis::custom
                        ? static_cast<int>(fm.info.custom_basis(Matrix::Zero(1, fm.vars)).cols())
                        : basis_size(fm.basis, fm.vars);
    return fm;
}

/// Information variables of an arbitrary structure, recomputed from the
/// stored states and increments (one v x M matrix per step 0..K). Only the
/// coordinates the structure observes are read.
inline std::vector<Matrix> replay_information(const TeamProblem& p, const InformationStructure& is,
                                              const PathEnsemble& e, std::size_t dm = 0) {
    for (int s : is.sources)
        if (s < 0 || static_cast<std::size_t>(s) >= p.subsystems.size())
            throw ModelError("information structure: source index " + std::to_string(s) + " out of range");
    int selected = 0;
    for (int s : is.sources) selected += p.subsystems[static_cast<std::size_t>(s)].state_dim;
    is.validate(dm, p.subsystems.size(), selected);
    InfoTracker tr(make_layout(p, is, dm), e.x.front());
    std::vector<Matrix> out;
    const double dt = e.grid.dt();
    for (int k = 0; k <= e.steps(); ++k) {
        const auto ks = static_cast<std::size_t>(k);
        out.push_back(tr.variables(e.x[ks]));
        if (k < e.steps()) tr.advance(e.x[ks], e.dW[ks], dt);
    }
    return out;
}

/// Feature matrix (M x p) of DM dm's stored information at step k.
inline Matrix information_features(const TeamProblem& p, std::size_t dm, const PathEnsemble& e,
                                   std::size_t k, Basis basis) {
    if (dm >= e.info.size()) throw ModelError("information_features: DM index out of range");
    if (k > static_cast<std::size_t>(e.steps())) throw ModelError("information_features: step beyond horizon");
    return expand_basis(e.info[dm][k], basis, p.info[dm].custom_basis);
}

/// Same for an arbitrary structure, replaying its variables up to step k.
inline Matrix information_features(const TeamProblem& p, const InformationStructure& is,
                                   const PathEnsemble& e, std::size_t k, Basis basis) {
    if (k > static_cast<std::size_t>(e.steps())) throw ModelError("information_features: step beyond horizon");
    return expand_basis(replay_information(p, is, e)[k], basis, is.custom_basis);
}

/// Full-information variables at step k: the state plus every path statistic
/// some DM conditions on that is not a function of the current state.
inline Matrix full_information_variables(const FullInfoLayout& L, const PathEnsemble& e, std::size_t k) {
    Matrix v(L.dim(), static_cast<Eigen::Index>(e.paths));
    v.topRows(L.n) = e.x[k];
    for (std::size_t j = 0; j < L.extra.size(); ++j)
        v.row(L.n + static_cast<Eigen::Index>(j)) = e.info[L.extra[j].first][k].row(L.extra[j].second);
    return v;
}

}  // namespace teamsmp

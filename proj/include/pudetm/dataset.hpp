#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pudetm/errors.hpp"

namespace pudetm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Positive-unlabeled sample pair: n labeled-positive source rows followed by
/// m unlabeled target rows, pooled into one N x p matrix. Immutable after
/// construction; construction enforces the basic shape/finiteness invariants.
class Dataset {
public:
    Dataset(const MatrixXd& source_x, const MatrixXd& target_x)
        : n_(static_cast<int>(source_x.rows())), m_(static_cast<int>(target_x.rows())) {
        if (n_ < 1 || m_ < 1) throw DataError("dataset: both samples must be non-empty");
        if (source_x.cols() < 1) throw DataError("dataset: feature dimension must be >= 1");
        if (source_x.cols() != target_x.cols())
            throw DataError("dataset: source and target feature dimensions differ");
        if (!source_x.allFinite() || !target_x.allFinite())
            throw DataError("dataset: non-finite feature values");
        x_.resize(n_ + m_, source_x.cols());
        x_.topRows(n_) = source_x;
        x_.bottomRows(m_) = target_x;
    }

    int n() const { return n_; }
    int m() const { return m_; }
    int N() const { return n_ + m_; }
    int p() const { return static_cast<int>(x_.cols()); }
    /// Target fraction m/N; the sampling-rate constant of the asymptotics.
    double c() const { return static_cast<double>(m_) / N(); }

    const MatrixXd& x() const { return x_; }
    auto source_x() const { return x_.topRows(n_); }
    auto target_x() const { return x_.bottomRows(m_); }

private:
    MatrixXd x_;
    int n_;
    int m_;
};

/// Structural parameters of the double exponential tilting model: two
/// log-linear density ratios exp(alpha_t + x'beta_t) plus the target-domain
/// positive proportion pi.
struct Theta {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    VectorXd beta1;
    VectorXd beta2;
    double pi = 0.5;

    Theta() = default;
    Theta(double a1, double a2, VectorXd b1, VectorXd b2, double pi_in)
        : alpha1(a1), alpha2(a2), beta1(std::move(b1)), beta2(std::move(b2)), pi(pi_in) {
        if (beta1.size() != beta2.size()) throw DomainError("theta: beta dimensions differ");
        if (!is_finite()) throw DomainError("theta: non-finite entries");
        if (!(pi > 0.0 && pi < 1.0)) throw DomainError("theta: pi must lie in (0,1)");
    }

    static Theta zero(int p) { return Theta(0.0, 0.0, VectorXd::Zero(p), VectorXd::Zero(p), 0.5); }

    int p() const { return static_cast<int>(beta1.size()); }

    /// The label-switched twin: components exchanged, pi reflected.
    Theta switched() const { return Theta(alpha2, alpha1, beta2, beta1, 1.0 - pi); }

    bool is_finite() const {
        return std::isfinite(alpha1) && std::isfinite(alpha2) && std::isfinite(pi) &&
               beta1.allFinite() && beta2.allFinite();
    }
};

/// One output column of a user feature map: a product of integer powers of
/// base columns, e.g. x1^2*x3.
struct ColumnExpr {
    std::vector<std::pair<int, int>> factors;  // (0-based column, power >= 1)
};

struct FeatureMap {
    enum class Kind { identity, polynomial, user_columns };

    Kind kind = Kind::identity;
    int degree = 1;                    // polynomial only
    std::vector<ColumnExpr> columns;   // user_columns only

    static FeatureMap identity() { return FeatureMap{}; }

    static FeatureMap polynomial(int degree) {
        if (degree < 1) throw ConfigError("feature map: polynomial degree must be >= 1");
        FeatureMap fm;
        fm.kind = Kind::polynomial;
        fm.degree = degree;
        return fm;
    }

    static FeatureMap user_columns(std::vector<ColumnExpr> cols) {
        if (cols.empty()) throw ConfigError("feature map: empty column list");
        FeatureMap fm;
        fm.kind = Kind::user_columns;
        fm.columns = std::move(cols);
        return fm;
    }

    /// Parse the CLI syntax: "identity", "poly:K", or "cols:x1,x2^2,x1*x3"
    /// with 1-based column indices.
    static FeatureMap parse(const std::string& text);

    std::string to_string() const;

    int output_dim(int p) const {
        switch (kind) {
            case Kind::identity: return p;
            case Kind::polynomial: return p * degree;
            case Kind::user_columns: return static_cast<int>(columns.size());
        }
        return p;
    }
};

inline FeatureMap FeatureMap::parse(const std::string& text) {
    if (text.empty() || text == "identity") return identity();
    if (text.rfind("poly:", 0) == 0) {
        int deg = 0;
        try {
            deg = std::stoi(text.substr(5));
        } catch (...) {
            throw ConfigError("feature map: bad polynomial degree in '" + text + "'");
        }
        return polynomial(deg);
    }
    if (text.rfind("cols:", 0) == 0) {
        std::vector<ColumnExpr> cols;
        std::string body = text.substr(5);
        size_t pos = 0;
        while (pos <= body.size()) {
            size_t comma = body.find(',', pos);
            std::string term = body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (term.empty()) throw ConfigError("feature map: empty column expression");
            ColumnExpr expr;
            size_t tp = 0;
            while (tp < term.size()) {
                if (term[tp] != 'x') throw ConfigError("feature map: expected 'x' in '" + term + "'");
                ++tp;
                size_t start = tp;
                while (tp < term.size() && std::isdigit(static_cast<unsigned char>(term[tp]))) ++tp;
                if (start == tp) throw ConfigError("feature map: missing column index in '" + term + "'");
                int col = std::stoi(term.substr(start, tp - start));
                if (col < 1) throw ConfigError("feature map: column indices are 1-based");
                int power = 1;
                if (tp < term.size() && term[tp] == '^') {
                    ++tp;
                    start = tp;
                    while (tp < term.size() && std::isdigit(static_cast<unsigned char>(term[tp]))) ++tp;
                    if (start == tp) throw ConfigError("feature map: missing power in '" + term + "'");
                    power = std::stoi(term.substr(start, tp - start));
                    if (power < 1) throw ConfigError("feature map: powers must be >= 1");
                }
                expr.factors.emplace_back(col - 1, power);
                if (tp < term.size()) {
                    if (term[tp] != '*') throw ConfigError("feature map: expected '*' in '" + term + "'");
                    ++tp;
                }
            }
            cols.push_back(std::move(expr));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return user_columns(std::move(cols));
    }
    throw ConfigError("feature map: unrecognized spec '" + text + "'");
}

inline std::string FeatureMap::to_string() const {
    switch (kind) {
        case Kind::identity: return "identity";
        case Kind::polynomial: return "poly:" + std::to_string(degree);
        case Kind::user_columns: {
            std::string out = "cols:";
            for (size_t i = 0; i < columns.size(); ++i) {
                if (i) out += ',';
                for (size_t f = 0; f < columns[i].factors.size(); ++f) {
                    if (f) out += '*';
                    out += 'x' + std::to_string(columns[i].factors[f].first + 1);
                    if (columns[i].factors[f].second != 1)
                        out += '^' + std::to_string(columns[i].factors[f].second);
                }
            }
            return out;
        }
    }
    return "identity";
}

/// Transform a raw feature matrix. polynomial(d) expands every column into
/// its first d powers, column-major by input column: (x1, x1^2, .., x2, ..).
inline MatrixXd apply_feature_map(const MatrixXd& x, const FeatureMap& fm) {
    const int p = static_cast<int>(x.cols());
    switch (fm.kind) {
        case FeatureMap::Kind::identity:
            return x;
        case FeatureMap::Kind::polynomial: {
            if (fm.degree < 1) throw ConfigError("feature map: polynomial degree must be >= 1");
            MatrixXd out(x.rows(), p * fm.degree);
            for (int j = 0; j < p; ++j) {
                VectorXd col = x.col(j);
                VectorXd pow = col;
                for (int d = 0; d < fm.degree; ++d) {
                    out.col(j * fm.degree + d) = pow;
                    if (d + 1 < fm.degree) pow = pow.cwiseProduct(col);
                }
            }
            if (!out.allFinite()) throw DataError("feature map: produced non-finite values");
            return out;
        }
        case FeatureMap::Kind::user_columns: {
            MatrixXd out(x.rows(), static_cast<int>(fm.columns.size()));
            for (size_t c = 0; c < fm.columns.size(); ++c) {
                VectorXd col = VectorXd::Ones(x.rows());
                for (const auto& [idx, power] : fm.columns[c].factors) {
                    if (idx < 0 || idx >= p)
                        throw ConfigError("feature map: column x" + std::to_string(idx + 1) +
                                          " out of range for p=" + std::to_string(p));
                    for (int k = 0; k < power; ++k) col = col.cwiseProduct(x.col(idx));
                }
                out.col(static_cast<int>(c)) = col;
            }
            if (!out.allFinite()) throw DataError("feature map: produced non-finite values");
            return out;
        }
    }
    return x;
}

inline Dataset apply_feature_map(const Dataset& ds, const FeatureMap& fm) {
    return Dataset(apply_feature_map(MatrixXd(ds.source_x()), fm),
                   apply_feature_map(MatrixXd(ds.target_x()), fm));
}

/// Diagnostics for the pooled design (1, x'): the finite-sample stand-in for
/// the positive-definiteness condition on E{q(X)q(X)'}.
struct DatasetDiagnostics {
    int n = 0;
    int m = 0;
    int p = 0;
    int design_rank = 0;        // rank of (1, x') over pooled rows
    bool full_rank = false;     // design_rank == p + 1
    VectorXd column_variance;   // per-feature variance over pooled rows
    std::vector<std::string> notes;
};

/// Rank check via column-pivoted QR with relative tolerance 1e-10 on the
/// diagonal of R. Rank deficiency is a hard error condition for fits.
inline DatasetDiagnostics validate_dataset(const Dataset& ds) {
    DatasetDiagnostics diag;
    diag.n = ds.n();
    diag.m = ds.m();
    diag.p = ds.p();

    const MatrixXd& x = ds.x();
    VectorXd mean = x.colwise().mean();
    diag.column_variance = ((x.rowwise() - mean.transpose()).array().square().colwise().sum() /
                            static_cast<double>(ds.N()))
                               .transpose();

    MatrixXd design(ds.N(), ds.p() + 1);
    design.col(0).setOnes();
    design.rightCols(ds.p()) = x;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    VectorXd rdiag = qr.matrixR().diagonal().cwiseAbs();
    double pivot0 = rdiag.size() ? rdiag(0) : 0.0;
    int rank = 0;
    for (int i = 0; i < rdiag.size(); ++i) {
        if (rdiag(i) > 1e-10 * pivot0) ++rank;
    }
    diag.design_rank = rank;
    diag.full_rank = (rank == ds.p() + 1);
    if (!diag.full_rank) {
        diag.notes.push_back("design matrix (1, x') is rank deficient: rank " +
                             std::to_string(rank) + " < " + std::to_string(ds.p() + 1));
    }
    for (int j = 0; j < diag.column_variance.size(); ++j) {
        if (diag.column_variance(j) <= 0.0) {
            diag.notes.push_back("feature column " + std::to_string(j + 1) + " is constant");
        }
    }
    return diag;
}

}  // namespace pudetm

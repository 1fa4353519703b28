#include "irlq/matops.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace irlq {

void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) {
        throw InvalidMatrix(std::string(what) + ": matrix has non-finite entries");
    }
}

namespace {

// Shared absolute cutoff derived from the relative tolerance. max(rows, cols)
// scales with the dimension-dependent growth of SVD rounding error.
double svd_cutoff(const Eigen::JacobiSVD<Mat>& svd, Eigen::Index rows, Eigen::Index cols,
                  double rtol) {
    const double smax = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    return rtol * smax * static_cast<double>(std::max(rows, cols));
}

}  // namespace

RankDecision rank_of(const Mat& m, double rtol) {
    require_finite(m, "rank_of");
    RankDecision d;
    if (m.size() == 0) {
        return d;
    }
    Eigen::JacobiSVD<Mat> svd(m);
    d.tolerance_used = svd_cutoff(svd, m.rows(), m.cols(), rtol);
    const auto& sv = svd.singularValues();
    d.singular_values.assign(sv.data(), sv.data() + sv.size());
    d.rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > d.tolerance_used) {
            ++d.rank;
        }
    }
    return d;
}

Mat pinv(const Mat& m, double rtol) {
    require_finite(m, "pinv");
    if (m.size() == 0) {
        return Mat::Zero(m.cols(), m.rows());
    }
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double cutoff = svd_cutoff(svd, m.rows(), m.cols(), rtol);
    const auto& sv = svd.singularValues();
    Vec inv_sv = Vec::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) {
            inv_sv(i) = 1.0 / sv(i);
        }
    }
    return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

bool range_included(const Mat& l, const Mat& n, double rtol) {
    require_finite(l, "range_included");
    require_finite(n, "range_included");
    if (l.rows() != n.rows()) {
        throw DimensionError("range_included: row counts differ");
    }
    if (n.size() == 0) {
        return true;
    }
    const Mat proj_residual = n - l * (pinv(l, rtol) * n);
    return proj_residual.norm() <= rtol * (1.0 + n.norm());
}

LxmSolution solve_lxm(const Mat& l, const Mat& m, const Mat& n, double rtol) {
    require_finite(l, "solve_lxm");
    require_finite(m, "solve_lxm");
    require_finite(n, "solve_lxm");
    if (l.rows() != n.rows() || m.cols() != n.cols()) {
        throw DimensionError("solve_lxm: incompatible shapes");
    }
    LxmSolution out;
    out.x = pinv(l, rtol) * n * pinv(m, rtol);
    out.residual = (l * out.x * m - n).norm();
    out.solvable = out.residual <= rtol * (1.0 + n.norm());
    return out;
}

RowCompression row_compress(const Mat& p, double rtol) {
    require_finite(p, "row_compress");
    const Eigen::Index rows = p.rows();
    const Eigen::Index cols = p.cols();

    RowCompression out;
    out.rank_decision = rank_of(p, rtol);

    // Gauss-Jordan on a working copy, accumulating the row operations in e.
    Mat work = p;
    Mat e = Mat::Identity(rows, rows);
    const double max_abs = rows * cols > 0 ? p.cwiseAbs().maxCoeff() : 0.0;
    const double cutoff = rtol * max_abs * static_cast<double>(std::max(rows, cols));

    Eigen::Index pivot_row = 0;
    for (Eigen::Index col = 0; col < cols && pivot_row < rows; ++col) {
        // Partial pivoting: largest |entry| at or below pivot_row, first occurrence.
        Eigen::Index best = pivot_row;
        double best_abs = std::abs(work(pivot_row, col));
        for (Eigen::Index r = pivot_row + 1; r < rows; ++r) {
            const double a = std::abs(work(r, col));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (best_abs <= cutoff) {
            continue;  // column already eliminated
        }
        if (best != pivot_row) {
            work.row(pivot_row).swap(work.row(best));
            e.row(pivot_row).swap(e.row(best));
        }
        const double piv = work(pivot_row, col);
        work.row(pivot_row) /= piv;
        e.row(pivot_row) /= piv;
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (r == pivot_row) {
                continue;
            }
            const double factor = work(r, col);
            if (factor != 0.0) {
                work.row(r) -= factor * work.row(pivot_row);
                e.row(r) -= factor * e.row(pivot_row);
            }
        }
        ++pivot_row;
    }
    const Eigen::Index elim_rank = pivot_row;
    out.zero_rows = rows - elim_rank;

    // Permute the eliminated zero rows to the top: rows [elim_rank, rows) of the
    // reduced form are (numerically) zero; they become rows [0, zero_rows).
    Mat perm = Mat::Zero(rows, rows);
    for (Eigen::Index r = 0; r < out.zero_rows; ++r) {
        perm(r, elim_rank + r) = 1.0;
    }
    for (Eigen::Index r = 0; r < elim_rank; ++r) {
        perm(out.zero_rows + r, r) = 1.0;
    }

    out.transform = perm * e;
    out.inverse_transform = out.transform.partialPivLu().solve(Mat::Identity(rows, rows));
    const Mat compressed = out.transform * p;
    out.bottom_block = compressed.bottomRows(elim_rank);
    return out;
}

}  // namespace irlq

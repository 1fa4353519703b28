#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

// Dense matrix kernel used by the whole solver: SVD-based pseudoinverse, rank
// decisions, range-inclusion tests, solvability of L X M = N, and rank-revealing
// row compression. One relative tolerance flows through everything so that rank,
// pseudoinverse, and range decisions never disagree with each other.

namespace irlq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kDefaultRtol = 1e-10;

struct InvalidMatrix : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Throws InvalidMatrix if any entry is NaN/Inf.
void require_finite(const Mat& m, const char* what);

struct RankDecision {
    Eigen::Index rank = 0;
    double tolerance_used = 0.0;          // absolute singular-value cutoff applied
    std::vector<double> singular_values;  // descending
};

// Rank with the shared truncation rule: sigma <= rtol * sigma_max * max(rows, cols)
// counts as zero. Identical rule drives pinv, so the two are always consistent.
RankDecision rank_of(const Mat& m, double rtol = kDefaultRtol);

// Moore-Penrose pseudoinverse via SVD with the shared truncation rule.
Mat pinv(const Mat& m, double rtol = kDefaultRtol);

// True iff Range(n) is contained in Range(l), tested as
// ||(I - L L^+) N||_F <= rtol * (1 + ||N||_F).
bool range_included(const Mat& l, const Mat& n, double rtol = kDefaultRtol);

struct LxmSolution {
    bool solvable = false;
    Mat x;                 // particular solution L^+ N M^+ (meaningful iff solvable)
    double residual = 0.0; // ||L x M - N||_F of the candidate solution
};

// Solvability of L X M = N: the equation has a solution iff the particular
// candidate X = L^+ N M^+ reproduces N exactly (up to tolerance).
LxmSolution solve_lxm(const Mat& l, const Mat& m, const Mat& n, double rtol = kDefaultRtol);

struct RowCompression {
    Mat transform;          // T: square, invertible
    Mat inverse_transform;  // T^-1
    Mat bottom_block;       // full-row-rank bottom block of T * p
    Eigen::Index zero_rows = 0;
    RankDecision rank_decision;  // SVD rank of the input, for reporting
};

// Invertible T with T * p = [0; bottom_block]: zero rows on top, a full-row-rank
// block at the bottom. Gaussian elimination with partial pivoting (largest
// absolute entry, first occurrence on ties), pivot rows normalized to pivot 1,
// zero rows permuted to the top. Only composition identities of the result are
// contractual; individual entries depend on this normalization.
RowCompression row_compress(const Mat& p, double rtol = kDefaultRtol);

}  // namespace irlq

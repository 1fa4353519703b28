#include <doctest.h>

#include "helpers.hpp"
#include "irlq/matops.hpp"

using namespace irlq;
using irlq::test::MatRng;
using irlq::test::max_abs;

TEST_CASE("rank_of applies the shared truncation rule") {
    CHECK(rank_of(Mat::Identity(4, 4)).rank == 4);
    CHECK(rank_of(Mat::Zero(2, 5)).rank == 0);
    CHECK(rank_of(Mat::Zero(0, 3)).rank == 0);

    Mat m = Mat::Zero(3, 3);
    m(0, 0) = 1.0;
    m(1, 1) = 1e-14;  // below rtol * sigma_max * max(rows, cols)
    CHECK(rank_of(m).rank == 1);
    m(1, 1) = 1e-3;
    CHECK(rank_of(m).rank == 2);

    MatRng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index rows = rng.index(1, 6);
        const Eigen::Index cols = rng.index(1, 6);
        const Eigen::Index r = rng.index(0, std::min(rows, cols));
        const Mat a = rng.rank_deficient(rows, cols, r);
        CHECK(rank_of(a).rank <= r);
        if (r > 0) CHECK(rank_of(a).rank >= 1);  // generic factors do not collapse
    }

    const auto dec = rank_of(Mat::Identity(3, 3));
    REQUIRE(dec.singular_values.size() == 3);
    CHECK(dec.singular_values[0] == doctest::Approx(1.0));
    CHECK(dec.tolerance_used > 0.0);
}

TEST_CASE("pinv satisfies the four Moore-Penrose axioms") {
    MatRng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const Eigen::Index rows = rng.index(1, 6);
        const Eigen::Index cols = rng.index(1, 6);
        Mat a;
        if (trial % 3 == 0) {
            a = rng.rank_deficient(rows, cols, rng.index(0, std::min(rows, cols)));
        } else {
            a = rng.matrix(rows, cols);
        }
        const Mat ap = pinv(a);
        const double scale = 1.0 + max_abs(a) + max_abs(ap);
        CHECK(max_abs(a * ap * a - a) <= 1e-9 * scale);
        CHECK(max_abs(ap * a * ap - ap) <= 1e-9 * scale);
        CHECK(max_abs(Mat(a * ap) - Mat((a * ap).transpose())) <= 1e-9 * scale);
        CHECK(max_abs(Mat(ap * a) - Mat((ap * a).transpose())) <= 1e-9 * scale);
    }
}

TEST_CASE("pinv handles exact special cases") {
    CHECK(max_abs(pinv(Mat::Zero(3, 2))) == 0.0);
    CHECK(max_abs(pinv(Mat::Identity(4, 4)) - Mat::Identity(4, 4)) < 1e-14);

    Mat d = Mat::Zero(2, 2);
    d(0, 0) = 2.0;
    const Mat dp = pinv(d);
    CHECK(dp(0, 0) == doctest::Approx(0.5));
    CHECK(dp(1, 1) == 0.0);

    // Near-singular direction is truncated, not inverted to 1e14.
    Mat s = Mat::Zero(2, 2);
    s(0, 0) = 1.0;
    s(1, 1) = 1e-14;
    CHECK(max_abs(pinv(s)) <= 1.0 + 1e-12);
}

TEST_CASE("pinv and rank_of stay consistent") {
    MatRng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index rows = rng.index(1, 5);
        const Eigen::Index cols = rng.index(1, 5);
        const Mat a = rng.rank_deficient(rows, cols, rng.index(0, std::min(rows, cols)));
        const Eigen::Index r = rank_of(a).rank;
        // trace(A^+ A) equals the rank for any matrix.
        CHECK(Mat(pinv(a) * a).trace() == doctest::Approx(static_cast<double>(r)).epsilon(1e-8));
    }
}

TEST_CASE("range_included basic decisions") {
    Mat l = Mat::Zero(2, 2);
    l(0, 0) = 1.0;
    Mat in(2, 1), out(2, 1);
    in << 3.0, 0.0;
    out << 0.0, 1.0;
    CHECK(range_included(l, in));
    CHECK_FALSE(range_included(l, out));
    CHECK(range_included(l, Mat::Zero(2, 3)));
    CHECK(range_included(l, Mat(2, 0)));  // empty target is trivially included
    CHECK(range_included(Mat::Zero(2, 2), Mat::Zero(2, 1)));
    CHECK_FALSE(range_included(Mat::Zero(2, 2), in));
    CHECK_THROWS_AS(range_included(Mat::Zero(3, 2), Mat::Zero(2, 1)), DimensionError);
}

TEST_CASE("range_included agrees with a least-squares oracle") {
    // Independent decision rule: the minimal residual of min ||L x - n_col|| is
    // the part of n_col outside the column-pivoted-QR range basis of L.
    MatRng rng(17);
    int disagreements = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index rows = rng.index(1, 6);
        const Eigen::Index cols = rng.index(1, 6);
        const Eigen::Index r = rng.index(0, std::min(rows, cols));
        const Mat l = rng.rank_deficient(rows, cols, r);
        Mat n;
        if (trial % 2 == 0) {
            n = l * rng.matrix(cols, rng.index(1, 3));  // included by construction
        } else {
            n = rng.matrix(rows, rng.index(1, 3));  // generic, included iff L has full row rank
        }
        const bool mine = range_included(l, n);
        Eigen::ColPivHouseholderQR<Mat> qr(l);
        const Mat q1 = Mat(qr.householderQ() * Mat::Identity(rows, rows)).leftCols(qr.rank());
        double worst = 0.0;
        for (Eigen::Index j = 0; j < n.cols(); ++j) {
            const Vec col = n.col(j);
            worst = std::max(worst, (col - q1 * (q1.transpose() * col)).norm());
        }
        const bool oracle = worst <= 1e-8 * (1.0 + n.norm());
        if (mine != oracle) ++disagreements;
    }
    CHECK(disagreements == 0);
}

TEST_CASE("solve_lxm solves and certifies L X M = N") {
    MatRng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index lr = rng.index(1, 4), lc = rng.index(1, 4);
        const Eigen::Index mr = rng.index(1, 4), mc = rng.index(1, 4);
        const Mat l = rng.matrix(lr, lc);
        const Mat m = rng.matrix(mr, mc);
        const Mat x0 = rng.matrix(lc, mr);
        const Mat n = l * x0 * m;
        const auto sol = solve_lxm(l, m, n);
        CHECK(sol.solvable);
        CHECK(max_abs(l * sol.x * m - n) <= 1e-8 * (1.0 + max_abs(n)));
        CHECK(sol.residual <= 1e-8 * (1.0 + n.norm()));
    }

    // N with a component outside Range(L) is certified unsolvable.
    Mat l = Mat::Zero(2, 2);
    l(0, 0) = 1.0;
    Mat n = Mat::Zero(2, 2);
    n(1, 0) = 1.0;
    const auto bad = solve_lxm(l, Mat::Identity(2, 2), n);
    CHECK_FALSE(bad.solvable);
    CHECK(bad.residual > 0.5);

    CHECK_THROWS_AS(solve_lxm(Mat::Zero(2, 2), Mat::Zero(3, 3), Mat::Zero(3, 3)), DimensionError);
}

TEST_CASE("row_compress composition identities") {
    MatRng rng(31);
    for (int trial = 0; trial < 120; ++trial) {
        const Eigen::Index rows = rng.index(1, 6);
        const Eigen::Index cols = rng.index(1, 6);
        Mat p;
        switch (trial % 3) {
            case 0: p = rng.matrix(rows, cols); break;
            case 1: p = rng.rank_deficient(rows, cols, rng.index(0, std::min(rows, cols))); break;
            default: p = Mat::Zero(rows, cols); break;
        }
        const auto rc = row_compress(p);
        const Eigen::Index bottom = rc.bottom_block.rows();
        const double scale = 1.0 + max_abs(p);

        REQUIRE(rc.transform.rows() == rows);
        REQUIRE(rc.zero_rows + bottom == rows);
        CHECK(max_abs(rc.transform * rc.inverse_transform - Mat::Identity(rows, rows)) <=
              1e-9 * (1.0 + max_abs(rc.transform) * max_abs(rc.inverse_transform)));

        const Mat tp = rc.transform * p;
        if (rc.zero_rows > 0) CHECK(max_abs(tp.topRows(rc.zero_rows)) <= 1e-9 * scale);
        if (bottom > 0) {
            CHECK(max_abs(tp.bottomRows(bottom) - rc.bottom_block) == 0.0);
            CHECK(rank_of(rc.bottom_block).rank == bottom);  // full row rank
        }
        CHECK(rc.rank_decision.rank == rank_of(p).rank);
    }
}

TEST_CASE("row_compress on the rank-one averaging projector") {
    Mat proj(2, 2);
    proj << 0.5, 0.5, 0.5, 0.5;
    const auto rc = row_compress(proj);
    CHECK(rc.zero_rows == 1);
    REQUIRE(rc.bottom_block.rows() == 1);
    // The surviving row spans the [1, 1] direction (entries equal and nonzero).
    CHECK(rc.bottom_block(0, 0) == doctest::Approx(rc.bottom_block(0, 1)));
    CHECK(std::abs(rc.bottom_block(0, 0)) > 0.1);
    CHECK(max_abs(rc.transform * rc.inverse_transform - Mat::Identity(2, 2)) <= 1e-12);
}

TEST_CASE("require_finite rejects NaN and Inf") {
    Mat ok = Mat::Ones(2, 2);
    CHECK_NOTHROW(require_finite(ok, "test"));
    ok(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(require_finite(ok, "test"), InvalidMatrix);
    ok(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(require_finite(ok, "test"), InvalidMatrix);
}

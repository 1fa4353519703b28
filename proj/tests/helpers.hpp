#pragma once

#include "irlq/problem.hpp"

#include <cstdint>
#include <random>
#include <string>

// Shared fixtures for the tests: bundled example files, programmatic problem
// builders at arbitrary resolution, and small random-matrix utilities.

namespace irlq::test {

inline std::string data_file(const std::string& name) {
    return std::string(IRLQ_DATA_DIR) + "/" + name;
}

inline LqProblem load_irregular_everywhere() {
    return load_problem_file(data_file("irregular_everywhere.json"));
}

inline LqProblem load_regular_scalar() {
    return load_problem_file(data_file("regular_scalar.json"));
}

// dx = u dt, cost = integral of u^2 dt + x(T)^2 on [0,1]: the Riccati solution
// is P(t) = 1/(2-t), optimal cost x0^2/2, feedback gain -1/(2-t).
inline LqProblem scalar_regular_problem(std::size_t steps) {
    LqProblem p;
    p.n = 1;
    p.m = 1;
    p.grid = TimeGrid{0.0, 1.0, steps};
    const Mat zero = Mat::Zero(1, 1);
    const Mat one = Mat::Ones(1, 1);
    p.a = MatrixPath::constant(p.grid, zero);
    p.b = MatrixPath::constant(p.grid, one);
    p.abar = MatrixPath::constant(p.grid, zero);
    p.bbar = MatrixPath::constant(p.grid, zero);
    p.q = MatrixPath::constant(p.grid, zero);
    p.r = MatrixPath::constant(p.grid, one);
    p.h = one;
    p.x0 = Vec::Ones(1);
    p.validate_and_normalize();
    return p;
}

// Fully programmatic problem with constant coefficients.
inline LqProblem constant_problem(const Mat& a, const Mat& b, const Mat& abar, const Mat& bbar,
                                  const Mat& q, const Mat& r, const Mat& h, const Vec& x0,
                                  const TimeGrid& grid) {
    LqProblem p;
    p.n = a.rows();
    p.m = b.cols();
    p.grid = grid;
    p.a = MatrixPath::constant(grid, a);
    p.b = MatrixPath::constant(grid, b);
    p.abar = MatrixPath::constant(grid, abar);
    p.bbar = MatrixPath::constant(grid, bbar);
    p.q = MatrixPath::constant(grid, q);
    p.r = MatrixPath::constant(grid, r);
    p.h = h;
    p.x0 = x0;
    p.validate_and_normalize();
    return p;
}

struct MatRng {
    std::mt19937_64 engine;
    explicit MatRng(std::uint64_t seed) : engine(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine);
    }
    Eigen::Index index(Eigen::Index lo, Eigen::Index hi) {
        return std::uniform_int_distribution<long>(lo, hi)(engine);
    }
    Mat matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(-scale, scale);
        return m;
    }
    // Rank at most `rank` (generically exactly `rank`).
    Mat rank_deficient(Eigen::Index rows, Eigen::Index cols, Eigen::Index rank) {
        return matrix(rows, rank) * matrix(rank, cols);
    }
    Mat spd(Eigen::Index n, double shift) {
        const Mat l = matrix(n, n);
        return Mat(l * l.transpose()) + shift * Mat::Identity(n, n);
    }
};

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace irlq::test

#pragma once

#include "irlq/matops.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Problem model: the controlled SDE dx = [A x + B u] dt + [Abar x + Bbar u] dw
// with quadratic cost E[ integral of (x'Qx + u'Ru) dt + x(T)'H x(T) ], a uniform
// time grid, piecewise-linear coefficient paths, and JSON file ingestion.

namespace irlq {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RangeError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct TimeGrid {
    double t0 = 0.0;
    double tT = 1.0;
    std::size_t steps = 1000;

    double dt() const { return (tT - t0) / static_cast<double>(steps); }
    std::size_t nodes() const { return steps + 1; }
    double node(std::size_t i) const { return t0 + static_cast<double>(i) * dt(); }

    bool operator==(const TimeGrid&) const = default;
};

// Time-varying matrix sampled at every grid node, piecewise-linear in between.
class MatrixPath {
  public:
    MatrixPath() = default;
    MatrixPath(TimeGrid grid, std::vector<Mat> samples);

    static MatrixPath constant(const TimeGrid& grid, const Mat& value);

    const Mat& at_node(std::size_t i) const { return samples_.at(i); }
    // Exact stored sample at grid nodes (bit-exact); linear interpolation between.
    Mat eval(double t) const;

    Eigen::Index rows() const { return samples_.empty() ? 0 : samples_.front().rows(); }
    Eigen::Index cols() const { return samples_.empty() ? 0 : samples_.front().cols(); }
    const TimeGrid& grid() const { return grid_; }
    const std::vector<Mat>& samples() const { return samples_; }
    bool is_constant() const;

  private:
    TimeGrid grid_;
    std::vector<Mat> samples_;
};

struct SolverOptions {
    double rtol = kDefaultRtol;
    std::size_t mc_paths = 20000;
    std::uint64_t seed = 42;
    // Absolute width of the terminal clamp window for closed-loop gains; if unset,
    // 1e-3 * (tT - t0) is used.
    std::optional<double> epsilon_clamp;
    std::vector<Mat> terminal_candidates;  // user-supplied layer terminal values

    double epsilon_for(const TimeGrid& grid) const {
        return epsilon_clamp ? *epsilon_clamp : 1e-3 * (grid.tT - grid.t0);
    }
};

struct LqProblem {
    Eigen::Index n = 0;  // state dimension
    Eigen::Index m = 0;  // input dimension
    MatrixPath a;        // n x n drift
    MatrixPath b;        // n x m drift input map
    MatrixPath abar;     // n x n diffusion
    MatrixPath bbar;     // n x m diffusion input map
    MatrixPath q;        // n x n running state weight (symmetric)
    MatrixPath r;        // m x m running input weight (symmetric)
    Mat h;               // n x n terminal weight (symmetric)
    TimeGrid grid;
    Vec x0;
    SolverOptions solver;

    // Throws ValidationError on dimension mismatch or asymmetric weights; weights
    // with asymmetry <= 1e-8 are symmetrized in place.
    void validate_and_normalize();
};

LqProblem load_problem(const std::string& text);
LqProblem load_problem_file(const std::string& path);
std::string serialize_problem(const LqProblem& p);

struct ConvexityReport {
    double min_cost_observed = 0.0;
    bool violated = false;
};

// Simulates the cost from x0 = 0 under randomly drawn piecewise-constant controls;
// violated iff any estimated cost falls below -3 standard errors. A falsification
// tool only: it can never certify nonnegativity. Defined alongside the simulator.
ConvexityReport convexity_probe(const LqProblem& p, std::size_t num_controls,
                                std::uint64_t seed);

}  // namespace irlq

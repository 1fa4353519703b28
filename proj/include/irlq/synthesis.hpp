#pragma once

#include "irlq/problem.hpp"

#include <optional>
#include <stdexcept>

// Terminal-constraint steering on the reduced exit system
//   dx = [Ahat x + Bhat v] dt + [Atilde x + Btilde v] dw,   M x(T) = 0.
// Open loop: minimum-energy steering of x(T) to 0 through a controllability
// Gramian. Closed loop: a gain K with (drift + input*K) = (1/(t-T)) I, which
// contracts the state to 0 linearly as t -> T.

namespace irlq {

struct NotFullRowRank : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GramianSingular : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GainInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReducedSystem {
    MatrixPath ahat;    // n x n drift
    MatrixPath bhat;    // n x d drift input map
    MatrixPath atilde;  // n x n diffusion
    MatrixPath btilde;  // n x d diffusion input map
    Mat constraint;     // M, with M x(T) = 0 required
};

struct MonteCarloConfig {
    std::size_t paths = 20000;
    std::uint64_t seed = 42;
};

struct LambdaFactor {
    Mat lambda;  // invertible, btilde * lambda = [I 0]
    Mat g1;      // first block of bhat * lambda
    Mat g2;      // remaining block of bhat * lambda
};

// Factors a full-row-rank btilde as btilde * Lambda = [I 0] (Lambda square,
// invertible, from the SVD) and returns the induced split bhat * Lambda =
// [G1 G2]. Throws NotFullRowRank otherwise.
LambdaFactor lambda_factor(const Mat& btilde, const Mat& bhat, double rtol = kDefaultRtol);

struct SteeringResult {
    enum class Mode { open_loop, closed_loop };
    Mode mode = Mode::open_loop;
    std::optional<MatrixPath> open_signal;  // v(t), d x 1 (open loop)
    std::optional<MatrixPath> gain;         // K(t) (closed loop)
    std::optional<Mat> gramian;             // symmetric PSD (open loop)
    std::optional<double> gramian_condition;

    // Free-control law composed for the feedback chain: v = free_gain x +
    // free_signal. In the stochastic branch this folds in the Lambda factor and
    // the mu = -Atilde x component that cancels the diffusion.
    MatrixPath free_gain;    // d x n
    MatrixPath free_signal;  // d x 1
};

// Minimum-energy open-loop steering of x(T) to 0. Deterministic branch
// (btilde == 0): Phi solves dPhi = -Ahat' Phi dt, Gramian by trapezoidal
// quadrature of Phi' Bhat Bhat' Phi. Stochastic branch (btilde full row rank):
// Phi solves dPhi = -[Ahat - G1 Atilde]' Phi dt - G1' Phi dw and the Gramian is
// a Monte Carlo average over mc.paths Brownian paths. Throws GramianSingular if
// the Gramian's condition number exceeds 1e10, NotFullRowRank if btilde is
// neither zero nor full row rank.
SteeringResult open_loop_steer(const ReducedSystem& sys, const Vec& x0, const TimeGrid& grid,
                               const MonteCarloConfig& mc, double rtol = kDefaultRtol);

// Gain K(t) solving (input map) * K = (1/(t-T)) I - (drift) node by node on
// [t0, T-epsilon], frozen at its last value afterward. Throws GainInfeasible
// when the equation has no solution (range condition fails) at some node.
SteeringResult closed_loop_steer(const ReducedSystem& sys, const TimeGrid& grid, double epsilon,
                                 double rtol = kDefaultRtol);

}  // namespace irlq

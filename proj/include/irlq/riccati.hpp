#pragma once

#include "irlq/problem.hpp"

#include <stdexcept>
#include <vector>

// Backward integration of the generalized Riccati equation
//   0 = Pdot + A'P + PA + Abar'P Abar + Q - Gamma0' Upsilon0^+ Gamma0,  P(T) = H,
// with Upsilon0 = R + Bbar'P Bbar and Gamma0 = B'P + Bbar'P Abar, and of the
// analogous equation for each reduction layer. Classical RK4 on the problem grid,
// P symmetrized after every step; pseudoinverses use the shared tolerance.

namespace irlq {

struct LayerCoefficients;  // defined in layering.hpp

// Thrown when ||P||_F exceeds 1e12 or turns non-finite during integration: the
// problem (or layer candidate) has no finite solution on the full horizon.
struct RiccatiBlowup : std::runtime_error {
    explicit RiccatiBlowup(double t);
    double time;
};

struct RiccatiSolution {
    MatrixPath p;        // symmetric at every node
    MatrixPath upsilon;  // symmetric at every node
    MatrixPath gamma;
    Mat terminal;  // p at the last node equals this bit-exactly

    // Rank of upsilon at each node under the shared tolerance. The reduction
    // assumes this profile is constant; changes are surfaced, not hidden.
    std::vector<Eigen::Index> upsilon_rank;
    // Layer equations only: nodes where (I - P_k Fbar_{k-1}) is rank-deficient
    // and the integrator proceeded with its pseudoinverse.
    std::vector<std::size_t> singular_nodes;

    bool rank_constant() const;
    Eigen::Index rank_at_front() const { return upsilon_rank.empty() ? 0 : upsilon_rank.front(); }
};

RiccatiSolution integrate_base(const LqProblem& p);

// Integrates the layer-(k) Riccati equation driven by the coefficients of layer
// k-1, backward from the supplied terminal value (the theory leaves the terminal
// free; candidate selection is the layering module's job).
RiccatiSolution integrate_layer(const LayerCoefficients& coeffs, const Mat& terminal,
                                double rtol = kDefaultRtol);

}  // namespace irlq

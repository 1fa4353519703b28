#pragma once

#include "irlq/layering.hpp"

#include <stdexcept>
#include <vector>

// Forward Euler-Maruyama validation of a synthesized controller: cost estimate
// with standard error, terminal-constraint residual E||M x(T)||^2, and the
// stationarity (equilibrium) residual that is the final arbiter of optimality.

namespace irlq {

struct SimulationBlowup : std::runtime_error {
    SimulationBlowup(std::size_t path_, double time_);
    std::size_t path;
    double time;
};

struct OracleInapplicable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulationReport {
    double cost_mean = 0.0;
    double cost_stderr = 0.0;
    double terminal_residual = 0.0;  // estimate of E||M x(T)||^2
    double mp_residual_max = 0.0;    // max equilibrium residual over paths x nodes
    std::vector<Vec> state_mean;     // per node
    std::vector<Vec> state_var;      // per node, componentwise sample variance
    std::vector<Vec> control_mean;   // per node
    std::size_t paths = 0;
    std::uint64_t seed = 0;
};

// Monte Carlo run of dx = [Ax+Bu]dt + [Abar x + Bbar u]dw under u = gain*x +
// signal, trapezoidal cost quadrature, deterministic for fixed (seed, paths,
// grid) at any thread count. `parallel=false` runs the serial reference
// implementation (identical results, kept for differential testing).
SimulationReport simulate(const LqProblem& p, const ControllerSpec& ctrl,
                          const MonteCarloConfig& mc, double epsilon, bool parallel = true);

// Equilibrium residual of one state trajectory sampled at the grid nodes:
// max over nodes t <= T - epsilon of
//   || Upsilon_0(t)(K x + g) + [Gamma_0 + B'S_1 + Bbar'W_0](t) x + Bbar'w_0(t) ||.
// The operator pieces come from the controller's caches; the (K, g) term uses the
// controller's current gain/signal so perturbed controllers are scored honestly.
double mp_residual(const LqProblem& p, const LayerStack& stack, const ControllerSpec& ctrl,
                   const std::vector<Vec>& states, double epsilon);

struct CostEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// Cost of an exogenous open-loop signal (no feedback term).
CostEstimate cost_of(const LqProblem& p, const MatrixPath& controls, const MonteCarloConfig& mc);

struct DpOracleResult {
    double cost = 0.0;
    MatrixPath gains;  // m x n feedback per node (last node repeats the previous gain)
};

// Independent oracle for regular problems: discrete-time dynamic programming on
// the Euler discretization (exact finite-horizon LQ recursion, plain LU inverses,
// no pseudoinverse machinery shared with the solver). Throws OracleInapplicable
// when the discrete input-weight block is not invertible.
DpOracleResult dp_oracle(const LqProblem& p);

}  // namespace irlq

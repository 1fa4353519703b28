#pragma once

#include "irlq/riccati.hpp"
#include "irlq/synthesis.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

// Multi-layer reduction for problems whose generalized Riccati equation is
// irregular (Range(Gamma_0) not contained in Range(Upsilon_0)). Each layer
// compresses the unresolved directions of the control, solves a further Riccati
// equation with a free terminal value, and either exits (range condition holds),
// descends, or certifies unsolvability over the candidate terminal set. The
// composed feedback chain is reconstructed bottom-up.

namespace irlq {

struct RankProfileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotSolvableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Coefficients of one reduced layer. With d_j the dimension of the free control
// u_j entering layer j (d_0 = m), the layer-j coefficient object stores:
// a, abar, d, dbar, f, fbar: n x n; b, bbar: n x d_{j+1}; c: d_{j+1} x n;
// h_in, hbar_in: n x d_j; g: d_j x d_{j+1}; input_dim = d_{j+1}.
struct LayerCoefficients {
    int index = 0;  // -1 marks the synthetic parent wrapping the original problem
    MatrixPath a;
    MatrixPath abar;
    MatrixPath d;
    MatrixPath dbar;
    MatrixPath f;
    MatrixPath fbar;
    MatrixPath b;
    MatrixPath bbar;
    MatrixPath c;
    MatrixPath h_in;
    MatrixPath hbar_in;
    MatrixPath g;
    Eigen::Index input_dim = 0;
};

enum class ConditionId { Z17, Z3, SEC20, SEC16, JNJ5 };
const char* to_string(ConditionId id);

// Diagnostic only: these necessary-looking conditions fail on textbook-valid
// instances (the worked 1-D example violates Z17 at every node), so the final
// arbiter of a controller's validity is the equilibrium residual, never these.
struct SideConditionReport {
    ConditionId condition_id = ConditionId::Z17;
    double max_violation = 0.0;
    std::size_t nodes_violated = 0;
};

struct LayerRecord {
    LayerCoefficients coeffs;                 // coefficients driving this layer's Riccati
    RiccatiSolution riccati;                  // P_k with Upsilon_k, Gamma_k
    std::vector<RowCompression> compression;  // per-node compression that built coeffs
    Eigen::Index m_k = 0;                     // free-control dimension entering this layer
    std::vector<SideConditionReport> diagnostics;
    Mat chosen_terminal;  // P_k(T) candidate selected at this layer
};

struct Regular {};
struct IrregularSolvable {
    std::size_t depth = 0;
    Mat terminal_constraint;  // M with M x(T) = 0 required for optimality
};
struct Unsolvable {
    std::size_t depth = 0;
};
struct Inconclusive {
    std::string reason;
};
using Verdict = std::variant<Regular, IrregularSolvable, Unsolvable, Inconclusive>;

std::string verdict_kind(const Verdict& v);

struct LayerStack {
    RiccatiSolution base;
    std::vector<LayerRecord> layers;  // empty iff verdict is Regular
    // Coefficients of the exit layer (subscript k), built from the winning
    // candidate's solution; present when the verdict is IrregularSolvable.
    std::optional<LayerCoefficients> exit_coeffs;
    Verdict verdict = Regular{};
    double rtol = kDefaultRtol;
};

// Range(Gamma_0(t)) contained in Range(Upsilon_0(t)) at every node?
bool classify_base(const RiccatiSolution& sol, double rtol = kDefaultRtol);

// Wraps the original problem as the parent of the first reduction layer
// (index -1): a=A, b=B, abar=Abar, bbar=Bbar, c=0, d=dbar=f=fbar=0.
LayerCoefficients problem_parent_coefficients(const LqProblem& p);

struct BuiltLayer {
    LayerCoefficients coeffs;
    std::vector<RowCompression> compression;
};

// Hook for tests: replaces the compression of I - Upsilon^+ Upsilon (used to
// verify that rescaling the compression leaves the final controller invariant).
using CompressFn = std::function<RowCompression(const Mat&, double)>;

// Builds the next layer's coefficient paths from the parent coefficients and the
// solved Riccati data (P, Upsilon, Gamma) at the parent's level. Throws
// RankProfileError if rank(Upsilon) changes across nodes.
BuiltLayer build_layer(const LayerCoefficients& parent, const RiccatiSolution& sol,
                       double rtol = kDefaultRtol, const CompressFn& compress = {});

// Evaluates the necessary side conditions for layer k (1-based, Z17/Z3 at k=1,
// SEC20/SEC16/JNJ5 deeper); purely diagnostic.
std::vector<SideConditionReport> check_side_conditions(const MatrixPath& problem_bbar,
                                                       const std::vector<LayerRecord>& layers,
                                                       std::size_t k,
                                                       double rtol = kDefaultRtol);

struct TerminalPolicy {
    // When true, each layer first tries 0 and -(sum of chosen terminals + H).
    bool use_defaults = true;
    std::vector<Mat> user_candidates;  // appended after the defaults
};

LayerStack reduce(const LqProblem& p);
LayerStack reduce(const LqProblem& p, const TerminalPolicy& policy);

// Core candidate/descend loop starting from ready-built layer coefficients;
// exposed so tests can inject synthetic layer data. `h` feeds the default
// terminal candidate -(sum of chosen terminals + h); `problem_bbar` feeds the
// side-condition diagnostics.
void continue_reduction(LayerStack& stack, BuiltLayer layer, const Mat& h,
                        const MatrixPath& problem_bbar, const TerminalPolicy& policy,
                        const CompressFn& compress = {});

enum class SteerMode { open_loop, closed_loop };

// Affine state-feedback u(t) = gain(t) x(t) + signal(t) together with the
// operator pieces of the stationarity condition
//   Upsilon_0 u + [Gamma_0 + B' S_1 + Bbar' W_0] x + Bbar' w_0 = 0,
// cached so a perturbed gain/signal is honestly re-scored by the residual.
struct ControllerSpec {
    MatrixPath gain;    // m x n
    MatrixPath signal;  // m x 1
    MatrixPath upsilon0;
    MatrixPath eq_gain;   // Gamma_0 + B' S_1 + Bbar' W_0
    MatrixPath eq_const;  // Bbar' w_0
    Mat terminal_constraint;  // M (zero when no constraint applies)
    SteerMode mode = SteerMode::closed_loop;
    std::optional<SteeringResult> steering;
};

// The reduced exit system (drift/diffusion of the residual free control) and the
// terminal constraint M = sum of chosen layer terminals. Requires verdict
// IrregularSolvable.
ReducedSystem reduced_exit_system(const LayerStack& stack);

// Composes the feedback chain bottom-up. For IrregularSolvable verdicts,
// `steering` supplies the innermost free-control law (absent = zero free input,
// appropriate when the terminal constraint is vacuous). Throws NotSolvableError
// unless the verdict is Regular or IrregularSolvable.
ControllerSpec reconstruct_controller(const LayerStack& stack, SteerMode mode,
                                      const std::optional<SteeringResult>& steering = {});

}  // namespace irlq

#include <doctest.h>

#include "helpers.hpp"
#include "irlq/layering.hpp"

#include <cmath>

using namespace irlq;
using irlq::test::MatRng;
using irlq::test::max_abs;

namespace {

const LqProblem& irregular_instance() {
    static const LqProblem p = irlq::test::load_irregular_everywhere();
    return p;
}

bool path_is(const MatrixPath& path, const Mat& value, double tol = 1e-12) {
    for (std::size_t i = 0; i < path.grid().nodes(); ++i) {
        if (max_abs(path.at_node(i) - value) > tol) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("verdict_kind and condition names") {
    CHECK(verdict_kind(Regular{}) == "Regular");
    CHECK(verdict_kind(IrregularSolvable{1, Mat::Zero(1, 1)}) == "IrregularSolvable");
    CHECK(verdict_kind(Unsolvable{2}) == "Unsolvable");
    CHECK(verdict_kind(Inconclusive{"x"}) == "Inconclusive");
    CHECK(std::string(to_string(ConditionId::Z17)) == "Z17");
    CHECK(std::string(to_string(ConditionId::Z3)) == "Z3");
    CHECK(std::string(to_string(ConditionId::SEC20)) == "SEC20");
    CHECK(std::string(to_string(ConditionId::SEC16)) == "SEC16");
    CHECK(std::string(to_string(ConditionId::JNJ5)) == "JNJ5");
}

TEST_CASE("classify_base separates regular from irregular instances") {
    CHECK(classify_base(integrate_base(irlq::test::load_regular_scalar())));
    CHECK_FALSE(classify_base(integrate_base(irregular_instance())));
}

TEST_CASE("problem_parent_coefficients wraps the problem as layer -1") {
    const LayerCoefficients pc = problem_parent_coefficients(irregular_instance());
    CHECK(pc.index == -1);
    CHECK(pc.input_dim == 2);
    CHECK(path_is(pc.a, Mat::Zero(1, 1)));
    CHECK(path_is(pc.b, irregular_instance().b.at_node(0)));
    CHECK(path_is(pc.bbar, irregular_instance().bbar.at_node(0)));
    CHECK(path_is(pc.c, Mat::Zero(2, 1)));
    CHECK(path_is(pc.d, Mat::Zero(1, 1)));
    CHECK(path_is(pc.fbar, Mat::Zero(1, 1)));
    CHECK(path_is(pc.g, Mat::Identity(2, 2)));
    CHECK(path_is(pc.h_in, irregular_instance().b.at_node(0)));
    CHECK(path_is(pc.hbar_in, irregular_instance().bbar.at_node(0)));
}

TEST_CASE("build_layer on the bundled irregular instance produces the known first layer") {
    const RiccatiSolution base = integrate_base(irregular_instance());
    const BuiltLayer layer = build_layer(problem_parent_coefficients(irregular_instance()), base);
    const LayerCoefficients& c = layer.coeffs;

    CHECK(c.input_dim == 1);  // m = 2 compresses to d_1 = 2 - rank(Upsilon_0) = 1
    CHECK(path_is(c.a, Mat::Zero(1, 1)));
    CHECK(path_is(c.abar, Mat::Zero(1, 1)));
    CHECK(path_is(c.d, Mat::Zero(1, 1)));
    CHECK(path_is(c.dbar, Mat::Zero(1, 1)));
    CHECK(path_is(c.f, Mat::Zero(1, 1)));
    CHECK(path_is(c.fbar, Mat::Constant(1, 1, -1.0)));
    CHECK(path_is(c.b, Mat::Ones(1, 1)));
    CHECK(path_is(c.bbar, Mat::Zero(1, 1)));
    CHECK(path_is(c.c, Mat::Ones(1, 1)));
    Mat h_in(1, 2), hbar_in(1, 2), g(2, 1);
    h_in << 1.0, 1.0;
    hbar_in << 1.0, -1.0;
    g << 0.5, 0.5;
    CHECK(path_is(c.h_in, h_in));
    CHECK(path_is(c.hbar_in, hbar_in));
    CHECK(path_is(c.g, g));

    REQUIRE(layer.compression.size() == irregular_instance().grid.nodes());
    CHECK(layer.compression[0].zero_rows == 1);
    CHECK(layer.compression[0].rank_decision.rank == 1);
}

TEST_CASE("build_layer on an all-zero parent yields an all-zero layer") {
    const TimeGrid grid{0.0, 1.0, 10};
    LayerCoefficients parent;
    parent.index = 0;
    const auto zero = [&](Eigen::Index r, Eigen::Index c) {
        return MatrixPath::constant(grid, Mat::Zero(r, c));
    };
    parent.a = parent.abar = parent.d = parent.dbar = parent.f = parent.fbar = zero(2, 2);
    parent.b = parent.bbar = zero(2, 3);
    parent.c = zero(3, 2);
    parent.h_in = parent.hbar_in = zero(2, 3);
    parent.g = MatrixPath::constant(grid, Mat::Identity(3, 3));
    parent.input_dim = 3;

    const RiccatiSolution sol = integrate_layer(parent, Mat::Zero(2, 2));
    const BuiltLayer layer = build_layer(parent, sol);
    CHECK(layer.coeffs.input_dim == 3);  // rank(Upsilon) = 0: nothing is resolved
    CHECK(path_is(layer.coeffs.a, Mat::Zero(2, 2)));
    CHECK(path_is(layer.coeffs.b, Mat::Zero(2, 3)));
    CHECK(path_is(layer.coeffs.c, Mat::Zero(3, 2)));
    CHECK(path_is(layer.coeffs.fbar, Mat::Zero(2, 2)));
}

TEST_CASE("build_layer rejects a varying rank profile") {
    const RiccatiSolution base = integrate_base(irregular_instance());
    RiccatiSolution tampered = base;
    tampered.upsilon_rank.front() = 2;
    CHECK_THROWS_AS(build_layer(problem_parent_coefficients(irregular_instance()), tampered),
                    RankProfileError);
}

TEST_CASE("reduce on the bundled instance: irregular, depth 1, constraint M = -1") {
    const LayerStack stack = reduce(irregular_instance());
    REQUIRE(verdict_kind(stack.verdict) == "IrregularSolvable");
    const auto& v = std::get<IrregularSolvable>(stack.verdict);
    CHECK(v.depth == 1);
    REQUIRE(v.terminal_constraint.rows() == 1);
    CHECK(v.terminal_constraint(0, 0) == -1.0);

    REQUIRE(stack.layers.size() == 1);
    const LayerRecord& rec = stack.layers[0];
    CHECK(rec.m_k == 1);
    CHECK(rec.chosen_terminal(0, 0) == -1.0);
    CHECK(rec.riccati.rank_at_front() == 0);
    CHECK(rec.riccati.singular_nodes.size() == irregular_instance().grid.nodes());
    CHECK(path_is(rec.riccati.p, Mat::Constant(1, 1, -1.0)));

    REQUIRE(stack.exit_coeffs.has_value());
    const LayerCoefficients& exit = *stack.exit_coeffs;
    CHECK(exit.input_dim == 1);
    CHECK(path_is(exit.a, Mat::Zero(1, 1)));
    CHECK(path_is(exit.b, Mat::Ones(1, 1)));
    CHECK(path_is(exit.bbar, Mat::Zero(1, 1)));
    CHECK(path_is(exit.c, Mat::Zero(1, 1)));
    CHECK(path_is(exit.g, Mat::Ones(1, 1)));
    CHECK(path_is(exit.h_in, Mat::Ones(1, 1)));
    CHECK(path_is(exit.hbar_in, Mat::Zero(1, 1)));
}

TEST_CASE("side-condition diagnostics on the bundled irregular instance") {
    const LayerStack stack = reduce(irregular_instance());
    REQUIRE(stack.layers.size() == 1);
    const auto& diags = stack.layers[0].diagnostics;
    REQUIRE(diags.size() == 2);

    const auto find = [&](ConditionId id) -> const SideConditionReport& {
        for (const auto& d : diags) {
            if (d.condition_id == id) return d;
        }
        REQUIRE(false);
        return diags.front();
    };
    const auto& z17 = find(ConditionId::Z17);
    CHECK(z17.nodes_violated == irregular_instance().grid.nodes());
    CHECK(z17.max_violation == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    const auto& z3 = find(ConditionId::Z3);
    CHECK(z3.nodes_violated == 0);
    CHECK(z3.max_violation == 0.0);
}

TEST_CASE("reduce on a regular problem returns Regular with no layers") {
    const LayerStack stack = reduce(irlq::test::load_regular_scalar());
    CHECK(verdict_kind(stack.verdict) == "Regular");
    CHECK(stack.layers.empty());
    CHECK_FALSE(stack.exit_coeffs.has_value());
    CHECK_THROWS_AS(reduced_exit_system(stack), NotSolvableError);
}

TEST_CASE("terminal candidate policy decides solvability") {
    // Layer-1 Riccati of the bundled instance has Gamma_1 = 1 + P_1 with P_1 frozen
    // at its terminal value, so {0} leaves Gamma_1 = 1 (unsolvable over the set)
    // while adding -1 zeroes it (exit).
    const LayerStack only_zero = reduce(irregular_instance(), TerminalPolicy{false, {Mat::Zero(1, 1)}});
    REQUIRE(verdict_kind(only_zero.verdict) == "Unsolvable");
    CHECK(std::get<Unsolvable>(only_zero.verdict).depth == 1);

    const LayerStack with_minus_one =
        reduce(irregular_instance(), TerminalPolicy{false, {Mat::Zero(1, 1), Mat::Constant(1, 1, -1.0)}});
    REQUIRE(verdict_kind(with_minus_one.verdict) == "IrregularSolvable");
    CHECK(with_minus_one.layers[0].chosen_terminal(0, 0) == -1.0);

    CHECK_THROWS_AS(reconstruct_controller(only_zero, SteerMode::closed_loop), NotSolvableError);
}

TEST_CASE("continue_reduction accepts injected layer data") {
    const LqProblem& p = irregular_instance();
    const auto run = [&](const TerminalPolicy& policy) {
        LayerStack stack;
        stack.rtol = p.solver.rtol;
        stack.base = integrate_base(p);
        BuiltLayer first = build_layer(problem_parent_coefficients(p), stack.base, stack.rtol);
        continue_reduction(stack, std::move(first), p.h, p.bbar, policy);
        return stack;
    };
    CHECK(verdict_kind(run(TerminalPolicy{false, {Mat::Zero(1, 1)}}).verdict) == "Unsolvable");
    const LayerStack solved =
        run(TerminalPolicy{false, {Mat::Zero(1, 1), Mat::Constant(1, 1, -1.0)}});
    CHECK(verdict_kind(solved.verdict) == "IrregularSolvable");
    CHECK(std::get<IrregularSolvable>(solved.verdict).depth == 1);
}

TEST_CASE("reduced_exit_system exposes the residual control dynamics") {
    const LayerStack stack = reduce(irregular_instance());
    const ReducedSystem sys = reduced_exit_system(stack);
    CHECK(path_is(sys.ahat, Mat::Zero(1, 1)));
    CHECK(path_is(sys.bhat, Mat::Ones(1, 1)));
    CHECK(path_is(sys.atilde, Mat::Zero(1, 1)));
    CHECK(path_is(sys.btilde, Mat::Zero(1, 1)));
    CHECK(sys.constraint(0, 0) == -1.0);
}

TEST_CASE("reconstruct_controller on a regular problem is the Riccati feedback") {
    const LqProblem p = irlq::test::load_regular_scalar();
    const LayerStack stack = reduce(p);
    const ControllerSpec ctrl = reconstruct_controller(stack, SteerMode::closed_loop);
    for (std::size_t i = 0; i < p.grid.nodes(); ++i) {
        const double t = p.grid.node(i);
        CHECK(std::abs(ctrl.gain.at_node(i)(0, 0) + 1.0 / (2.0 - t)) <= 1e-8);
        CHECK(ctrl.signal.at_node(i)(0, 0) == 0.0);
        // Stationarity: Upsilon_0 K + eq_gain = 0 for the synthesized feedback.
        CHECK(max_abs(ctrl.upsilon0.at_node(i) * ctrl.gain.at_node(i) +
                      ctrl.eq_gain.at_node(i)) <= 1e-9);
        CHECK(max_abs(ctrl.eq_const.at_node(i)) == 0.0);
    }
    CHECK(max_abs(ctrl.terminal_constraint) == 0.0);
}

TEST_CASE("reconstructed controllers match the bundled instance's closed forms") {
    const LqProblem& p = irregular_instance();
    const LayerStack stack = reduce(p);
    const ReducedSystem sys = reduced_exit_system(stack);
    const double eps = p.solver.epsilon_for(p.grid);

    SUBCASE("closed loop: gain [1;1] / (2(t-1)), frozen in the clamp window") {
        const auto steer = closed_loop_steer(sys, p.grid, eps, stack.rtol);
        const ControllerSpec ctrl =
            reconstruct_controller(stack, SteerMode::closed_loop, steer);
        Vec dir(2);
        dir << 1.0, 1.0;
        for (std::size_t i = 0; i < p.grid.nodes(); ++i) {
            const double t = p.grid.node(i);
            const double tc = std::min(t, 1.0 - eps);  // frozen at the clamp boundary
            const Vec expect = dir / (2.0 * (tc - 1.0));
            CHECK(max_abs(ctrl.gain.at_node(i) - expect) <= 1e-8 * (1.0 + max_abs(expect)));
            CHECK(max_abs(ctrl.signal.at_node(i)) == 0.0);
        }
        CHECK(ctrl.terminal_constraint(0, 0) == -1.0);
        CHECK(ctrl.mode == SteerMode::closed_loop);
    }

    SUBCASE("open loop: zero gain, constant signal -[0.5; 0.5] x0") {
        const auto steer =
            open_loop_steer(sys, p.x0, p.grid, MonteCarloConfig{2000, p.solver.seed}, stack.rtol);
        const ControllerSpec ctrl = reconstruct_controller(stack, SteerMode::open_loop, steer);
        Vec expect(2);
        expect << -0.5, -0.5;
        for (std::size_t i = 0; i < p.grid.nodes(); ++i) {
            CHECK(max_abs(ctrl.gain.at_node(i)) <= 1e-12);
            CHECK(max_abs(ctrl.signal.at_node(i) - expect) <= 1e-8);
        }
        CHECK(ctrl.mode == SteerMode::open_loop);
    }
}

TEST_CASE("final controller is invariant under rescaled row compression") {
    // The compression transform is normalization-dependent; the composed
    // controller must not be. Rescale the surviving block by 3 and compare.
    const LqProblem& p = irregular_instance();
    const CompressFn scaled = [](const Mat& m, double rtol) {
        RowCompression rc = row_compress(m, rtol);
        const Eigen::Index bottom = rc.bottom_block.rows();
        if (bottom > 0) {
            rc.transform.bottomRows(bottom) *= 3.0;
            rc.bottom_block *= 3.0;
            rc.inverse_transform.rightCols(bottom) /= 3.0;
        }
        return rc;
    };

    const auto build_stack = [&](const CompressFn& fn) {
        LayerStack stack;
        stack.rtol = p.solver.rtol;
        stack.base = integrate_base(p);
        BuiltLayer first =
            build_layer(problem_parent_coefficients(p), stack.base, stack.rtol, fn);
        continue_reduction(stack, std::move(first), p.h, p.bbar, TerminalPolicy{}, fn);
        return stack;
    };

    const LayerStack ref = build_stack(CompressFn{});
    const LayerStack alt = build_stack(scaled);
    REQUIRE(verdict_kind(alt.verdict) == "IrregularSolvable");

    const double eps = p.solver.epsilon_for(p.grid);
    const auto controller = [&](const LayerStack& stack, SteerMode mode) {
        const ReducedSystem sys = reduced_exit_system(stack);
        if (mode == SteerMode::closed_loop) {
            return reconstruct_controller(stack, mode,
                                          closed_loop_steer(sys, p.grid, eps, stack.rtol));
        }
        return reconstruct_controller(
            stack, mode,
            open_loop_steer(sys, p.x0, p.grid, MonteCarloConfig{2000, p.solver.seed}, stack.rtol));
    };

    for (const SteerMode mode : {SteerMode::closed_loop, SteerMode::open_loop}) {
        const ControllerSpec a = controller(ref, mode);
        const ControllerSpec b = controller(alt, mode);
        for (std::size_t i = 0; i < p.grid.nodes(); ++i) {
            const double scale = 1.0 + max_abs(a.gain.at_node(i)) + max_abs(a.signal.at_node(i));
            CHECK(max_abs(a.gain.at_node(i) - b.gain.at_node(i)) <= 1e-8 * scale);
            CHECK(max_abs(a.signal.at_node(i) - b.signal.at_node(i)) <= 1e-8 * scale);
        }
    }
}

TEST_CASE("pseudoinverse push-through identities used by the layer algebra") {
    // For L1' P (I - Fbar P)^+ L2 and (I - Fbar P)^+ L: with an invertible pencil
    // the pseudoinverse is the inverse and both identities are exact.
    MatRng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index n = rng.index(1, 3);
        const Mat p = Mat(0.5 * (rng.matrix(n, n) + rng.matrix(n, n).transpose()));
        const Mat fbar = rng.matrix(n, n, 0.1);  // ||Fbar P|| < 1 keeps the pencil invertible
        const Mat l1 = rng.matrix(n, n);
        const Mat l2 = rng.matrix(n, n);
        const Mat left = pinv(Mat::Identity(n, n) - fbar * p);
        const Mat right = pinv(Mat::Identity(n, n) - p * fbar);

        const Mat lhs1 = l1.transpose() * p * left * l2;
        const Mat rhs1 = l1.transpose() * right * p * l2;
        CHECK(max_abs(lhs1 - rhs1) <= 1e-8 * (1.0 + max_abs(lhs1)));

        const Mat lhs2 = left * l2;
        const Mat rhs2 = (Mat::Identity(n, n) + fbar * right * p) * l2;
        CHECK(max_abs(lhs2 - rhs2) <= 1e-8 * (1.0 + max_abs(lhs2)));
    }
}

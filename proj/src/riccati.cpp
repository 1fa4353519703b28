#include "irlq/riccati.hpp"

#include "irlq/layering.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace irlq {

namespace {

constexpr double kBlowupNorm = 1e12;

std::string blowup_message(double t) {
    std::ostringstream os;
    os << "Riccati integration blew up at t=" << t;
    return os.str();
}

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

// Shared backward RK4 driver: rhs(t, P) is the time derivative dP/dt.
template <typename Rhs>
std::vector<Mat> integrate_backward(const TimeGrid& grid, const Mat& terminal, Rhs&& rhs) {
    std::vector<Mat> nodes(grid.nodes());
    nodes[grid.steps] = terminal;  // stored exactly as supplied
    const double h = -grid.dt();   // stepping backward in time
    Mat p = terminal;
    for (std::size_t i = grid.steps; i-- > 0;) {
        const double t = grid.node(i + 1);
        const Mat k1 = rhs(t, p);
        const Mat k2 = rhs(t + 0.5 * h, p + (0.5 * h) * k1);
        const Mat k3 = rhs(t + 0.5 * h, p + (0.5 * h) * k2);
        const Mat k4 = rhs(t + h, p + h * k3);
        p = symmetrize(p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        if (!p.allFinite() || p.norm() > kBlowupNorm) {
            throw RiccatiBlowup(grid.node(i));
        }
        nodes[i] = p;
    }
    return nodes;
}

}  // namespace

RiccatiBlowup::RiccatiBlowup(double t) : std::runtime_error(blowup_message(t)), time(t) {}

bool RiccatiSolution::rank_constant() const {
    return std::all_of(upsilon_rank.begin(), upsilon_rank.end(),
                       [&](Eigen::Index r) { return r == upsilon_rank.front(); });
}

RiccatiSolution integrate_base(const LqProblem& prob) {
    const double rtol = prob.solver.rtol;
    const auto upsilon_at = [&](double t, const Mat& p) -> Mat {
        const Mat bbar = prob.bbar.eval(t);
        return symmetrize(prob.r.eval(t) + bbar.transpose() * p * bbar);
    };
    const auto gamma_at = [&](double t, const Mat& p) -> Mat {
        return prob.b.eval(t).transpose() * p +
               prob.bbar.eval(t).transpose() * p * prob.abar.eval(t);
    };
    const auto rhs = [&](double t, const Mat& p) -> Mat {
        const Mat a = prob.a.eval(t);
        const Mat abar = prob.abar.eval(t);
        const Mat gam = gamma_at(t, p);
        // 0 = Pdot + A'P + PA + Abar'P Abar + Q - Gamma' Upsilon^+ Gamma
        return -(a.transpose() * p + p * a + abar.transpose() * p * abar + prob.q.eval(t) -
                 gam.transpose() * pinv(upsilon_at(t, p), rtol) * gam);
    };

    RiccatiSolution out;
    out.terminal = prob.h;
    auto p_nodes = integrate_backward(prob.grid, prob.h, rhs);

    std::vector<Mat> ups_nodes(prob.grid.nodes()), gam_nodes(prob.grid.nodes());
    out.upsilon_rank.resize(prob.grid.nodes());
    for (std::size_t i = 0; i < prob.grid.nodes(); ++i) {
        const double t = prob.grid.node(i);
        ups_nodes[i] = upsilon_at(t, p_nodes[i]);
        gam_nodes[i] = gamma_at(t, p_nodes[i]);
        out.upsilon_rank[i] = rank_of(ups_nodes[i], rtol).rank;
    }
    out.p = MatrixPath(prob.grid, std::move(p_nodes));
    out.upsilon = MatrixPath(prob.grid, std::move(ups_nodes));
    out.gamma = MatrixPath(prob.grid, std::move(gam_nodes));
    return out;
}

RiccatiSolution integrate_layer(const LayerCoefficients& coeffs, const Mat& terminal,
                                double rtol) {
    require_finite(terminal, "integrate_layer");
    if (terminal.rows() != terminal.cols() || terminal.rows() != coeffs.a.at_node(0).rows()) {
        throw DimensionError("integrate_layer: terminal value must be square and match the layer state dimension");
    }
    if ((terminal - terminal.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
        throw InvalidMatrix("integrate_layer: terminal value must be symmetric");
    }
    const Eigen::Index n = terminal.rows();
    const Mat eye = Mat::Identity(n, n);

    const auto upsilon_at = [&](double t, const Mat& p) -> Mat {
        const Mat bbar = coeffs.bbar.eval(t);
        const Mat j = pinv(eye - p * coeffs.fbar.eval(t), rtol);
        return symmetrize(bbar.transpose() * j * p * bbar);
    };
    const auto gamma_at = [&](double t, const Mat& p) -> Mat {
        const Mat j = pinv(eye - p * coeffs.fbar.eval(t), rtol);
        return coeffs.c.eval(t) + coeffs.b.eval(t).transpose() * p +
               coeffs.bbar.eval(t).transpose() * j * p *
                   (coeffs.abar.eval(t) + coeffs.dbar.eval(t) * p);
    };
    const auto rhs = [&](double t, const Mat& p) -> Mat {
        const Mat a = coeffs.a.eval(t);
        const Mat abar = coeffs.abar.eval(t);
        const Mat d = coeffs.d.eval(t);
        const Mat dbar = coeffs.dbar.eval(t);
        const Mat f = coeffs.f.eval(t);
        const Mat j = pinv(eye - p * coeffs.fbar.eval(t), rtol);
        const Mat gam = gamma_at(t, p);
        return -(p * a + a.transpose() * p + p * d * p +
                 (abar.transpose() + p * f) * j * p * (abar + dbar * p) -
                 gam.transpose() * pinv(upsilon_at(t, p), rtol) * gam);
    };

    RiccatiSolution out;
    out.terminal = terminal;
    const TimeGrid& grid = coeffs.a.grid();
    auto p_nodes = integrate_backward(grid, terminal, rhs);

    std::vector<Mat> ups_nodes(grid.nodes()), gam_nodes(grid.nodes());
    out.upsilon_rank.resize(grid.nodes());
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        const double t = grid.node(i);
        ups_nodes[i] = upsilon_at(t, p_nodes[i]);
        gam_nodes[i] = gamma_at(t, p_nodes[i]);
        out.upsilon_rank[i] = rank_of(ups_nodes[i], rtol).rank;
        const Mat pencil = eye - p_nodes[i] * coeffs.fbar.at_node(i);
        if (rank_of(pencil, rtol).rank < n) {
            out.singular_nodes.push_back(i);
        }
    }
    out.p = MatrixPath(grid, std::move(p_nodes));
    out.upsilon = MatrixPath(grid, std::move(ups_nodes));
    out.gamma = MatrixPath(grid, std::move(gam_nodes));
    return out;
}

}  // namespace irlq

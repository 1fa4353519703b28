#include "irlq/synthesis.hpp"

#include "irlq/matops.hpp"
#include "irlq/rng.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace irlq {

namespace {

constexpr double kGramianConditionLimit = 1e10;

bool is_zero_path(const MatrixPath& path, double rtol) {
    for (const Mat& m : path.samples()) {
        if (m.size() > 0 && m.cwiseAbs().maxCoeff() > rtol) {
            return false;
        }
    }
    return true;
}

bool full_row_rank_everywhere(const MatrixPath& path, double rtol) {
    for (const Mat& m : path.samples()) {
        if (rank_of(m, rtol).rank != m.rows()) {
            return false;
        }
    }
    return true;
}

// Forward RK4 for dPhi = rhs(t, Phi) dt with Phi(t0) = I, sampled on the grid.
template <typename Rhs>
std::vector<Mat> integrate_transition(const TimeGrid& grid, Eigen::Index n, const Rhs& rhs) {
    std::vector<Mat> phi(grid.nodes());
    phi[0] = Mat::Identity(n, n);
    const double dt = grid.dt();
    for (std::size_t i = 0; i + 1 < grid.nodes(); ++i) {
        const double t = grid.node(i);
        const Mat k1 = rhs(t, phi[i]);
        const Mat k2 = rhs(t + 0.5 * dt, Mat(phi[i] + 0.5 * dt * k1));
        const Mat k3 = rhs(t + 0.5 * dt, Mat(phi[i] + 0.5 * dt * k2));
        const Mat k4 = rhs(t + dt, Mat(phi[i] + dt * k3));
        phi[i + 1] = phi[i] + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return phi;
}

double condition_number(const Mat& g) {
    Eigen::JacobiSVD<Mat> svd(g);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return sv(0) / sv(sv.size() - 1);
}

void check_gramian(const Mat& g) {
    const double cond = condition_number(g);
    if (!std::isfinite(cond) || cond > kGramianConditionLimit) {
        std::ostringstream os;
        os << "steering Gramian is numerically singular (condition " << cond << ")";
        throw GramianSingular(os.str());
    }
}

}  // namespace

LambdaFactor lambda_factor(const Mat& btilde, const Mat& bhat, double rtol) {
    const Eigen::Index n = btilde.rows();
    const Eigen::Index d = btilde.cols();
    if (bhat.rows() != n || bhat.cols() != d) {
        throw DimensionError("lambda_factor: bhat and btilde must have identical shapes");
    }
    Eigen::JacobiSVD<Mat> svd(btilde, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cutoff =
        rtol * (sv.size() > 0 ? sv(0) : 0.0) * static_cast<double>(std::max(n, d));
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) ++rank;
    }
    if (rank != n) {
        std::ostringstream os;
        os << "diffusion input map is not full row rank (rank " << rank << " of " << n << ")";
        throw NotFullRowRank(os.str());
    }

    // Pseudoinverse gives btilde * pinv = I; the trailing right-singular vectors
    // span ker(btilde), so [pinv | kernel basis] is square and invertible.
    Mat sigma_pinv = Mat::Zero(d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        sigma_pinv(i, i) = 1.0 / sv(i);
    }
    LambdaFactor out;
    out.lambda = Mat(d, d);
    out.lambda.leftCols(n) = svd.matrixV() * sigma_pinv * svd.matrixU().transpose();
    out.lambda.rightCols(d - n) = svd.matrixV().rightCols(d - n);
    const Mat split = bhat * out.lambda;
    out.g1 = split.leftCols(n);
    out.g2 = split.rightCols(d - n);
    return out;
}

SteeringResult open_loop_steer(const ReducedSystem& sys, const Vec& x0, const TimeGrid& grid,
                               const MonteCarloConfig& mc, double rtol) {
    const Eigen::Index n = sys.ahat.rows();
    const Eigen::Index d = sys.bhat.cols();
    const std::size_t nodes = grid.nodes();
    const double dt = grid.dt();

    SteeringResult res;
    res.mode = SteeringResult::Mode::open_loop;

    if (is_zero_path(sys.btilde, rtol)) {
        // Deterministic branch: exact minimum-energy steering through the
        // controllability Gramian of (Ahat, Bhat).
        const auto phi = integrate_transition(grid, n, [&](double t, const Mat& m) -> Mat {
            return -sys.ahat.eval(t).transpose() * m;
        });
        Mat gram = Mat::Zero(n, n);
        for (std::size_t i = 0; i < nodes; ++i) {
            const Mat bh = sys.bhat.at_node(i);
            const double w = (i == 0 || i + 1 == nodes) ? 0.5 * dt : dt;
            gram += w * phi[i].transpose() * bh * bh.transpose() * phi[i];
        }
        gram = 0.5 * (gram + gram.transpose());
        check_gramian(gram);
        const Vec alpha = pinv(gram, rtol) * x0;

        std::vector<Mat> signal(nodes), zero_gain(nodes);
        for (std::size_t i = 0; i < nodes; ++i) {
            signal[i] = -sys.bhat.at_node(i).transpose() * phi[i] * alpha;
            zero_gain[i] = Mat::Zero(d, n);
        }
        MatrixPath sig_path(grid, std::move(signal));
        res.open_signal = sig_path;
        res.gramian = gram;
        res.gramian_condition = condition_number(gram);
        res.free_gain = MatrixPath(grid, std::move(zero_gain));
        res.free_signal = sig_path;
        return res;
    }

    if (!full_row_rank_everywhere(sys.btilde, rtol)) {
        throw NotFullRowRank(
            "diffusion input map is neither zero nor full row rank on the whole grid");
    }

    // Stochastic branch. Factor btilde * Lambda = [I 0] at each node; the first
    // input block mu = -Atilde x cancels the state diffusion, leaving
    //   dx = ([Ahat - G1 Atilde] x + G2 nu) dt + (mu + Atilde x) dw.
    std::vector<LambdaFactor> lf(nodes);
    std::vector<Mat> drift(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        lf[i] = lambda_factor(sys.btilde.at_node(i), sys.bhat.at_node(i), rtol);
        drift[i] = sys.ahat.at_node(i) - lf[i].g1 * sys.atilde.at_node(i);
    }
    const MatrixPath drift_path(grid, drift);

    // Mean transition for the signal: E[Phi] of the Phi-SDE solves the drift ODE.
    const auto phi_mean = integrate_transition(grid, n, [&](double t, const Mat& m) -> Mat {
        return -drift_path.eval(t).transpose() * m;
    });

    // Gramian E int Phi' G2 G2' Phi dt by Euler-Maruyama over Brownian paths.
    const double sqrt_dt = std::sqrt(dt);
    Mat gram = Mat::Zero(n, n);
    for (std::size_t path = 0; path < mc.paths; ++path) {
        PathRng rng(mc.seed, 0, path);
        Mat phi = Mat::Identity(n, n);
        Mat acc = Mat::Zero(n, n);
        for (std::size_t i = 0; i < nodes; ++i) {
            const double w = (i == 0 || i + 1 == nodes) ? 0.5 * dt : dt;
            const Mat g2phi = lf[i].g2.transpose() * phi;
            acc += w * g2phi.transpose() * g2phi;
            if (i + 1 < nodes) {
                const double dw = sqrt_dt * rng.next_normal();
                phi += -dt * drift[i].transpose() * phi - dw * lf[i].g1.transpose() * phi;
            }
        }
        gram += acc;
    }
    gram /= static_cast<double>(mc.paths);
    gram = 0.5 * (gram + gram.transpose());
    check_gramian(gram);
    const Vec alpha = pinv(gram, rtol) * x0;

    std::vector<Mat> gain_v(nodes), signal_v(nodes), nu_v(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        const Eigen::Index free_dim = d - n;
        const Vec nu = -lf[i].g2.transpose() * phi_mean[i] * alpha;
        Mat stacked_gain = Mat::Zero(d, n);
        stacked_gain.topRows(n) = -sys.atilde.at_node(i);
        Mat stacked_sig = Mat::Zero(d, 1);
        stacked_sig.bottomRows(free_dim) = nu;
        gain_v[i] = lf[i].lambda * stacked_gain;
        signal_v[i] = lf[i].lambda * stacked_sig;
        nu_v[i] = signal_v[i];
    }
    res.open_signal = MatrixPath(grid, std::move(nu_v));
    res.gramian = gram;
    res.gramian_condition = condition_number(gram);
    res.free_gain = MatrixPath(grid, std::move(gain_v));
    res.free_signal = MatrixPath(grid, std::move(signal_v));
    return res;
}

SteeringResult closed_loop_steer(const ReducedSystem& sys, const TimeGrid& grid, double epsilon,
                                 double rtol) {
    const Eigen::Index n = sys.ahat.rows();
    const Eigen::Index d = sys.bhat.cols();
    const std::size_t nodes = grid.nodes();
    const double t_end = grid.tT;
    const Mat eye = Mat::Identity(n, n);

    SteeringResult res;
    res.mode = SteeringResult::Mode::closed_loop;

    const bool deterministic = is_zero_path(sys.btilde, rtol);
    if (!deterministic && !full_row_rank_everywhere(sys.btilde, rtol)) {
        throw NotFullRowRank(
            "diffusion input map is neither zero nor full row rank on the whole grid");
    }

    // Solve (input map) * K = (1/(t-T)) I - (drift) on the active window
    // [t0, T - epsilon]; the gain is frozen at its last active value afterward.
    std::vector<Mat> gain_v(nodes), zero_sig(nodes);
    std::optional<std::size_t> last_active;
    for (std::size_t i = 0; i < nodes; ++i) {
        const double t = grid.node(i);
        zero_sig[i] = Mat::Zero(d, 1);
        if (t > t_end - epsilon + 1e-12 * (1.0 + std::abs(t_end))) {
            if (!last_active) {
                throw GainInfeasible("no grid node lies inside the active steering window");
            }
            gain_v[i] = gain_v[*last_active];
            continue;
        }

        Mat input_map, rhs;
        Mat lambda;  // set in the stochastic branch
        Eigen::Index free_dim = d;
        if (deterministic) {
            input_map = sys.bhat.at_node(i);
            rhs = (1.0 / (t - t_end)) * eye - sys.ahat.at_node(i);
        } else {
            const LambdaFactor lf =
                lambda_factor(sys.btilde.at_node(i), sys.bhat.at_node(i), rtol);
            input_map = lf.g2;
            rhs = (1.0 / (t - t_end)) * eye -
                  (sys.ahat.at_node(i) - lf.g1 * sys.atilde.at_node(i));
            lambda = lf.lambda;
            free_dim = d - n;
        }
        const Mat k = pinv(input_map, rtol) * rhs;
        const double resid = (input_map * k - rhs).norm();
        if (resid > 1e-8 * (1.0 + rhs.norm())) {
            std::ostringstream os;
            os << "contraction gain equation unsolvable at t=" << t << " (residual " << resid
               << ")";
            throw GainInfeasible(os.str());
        }
        if (deterministic) {
            gain_v[i] = k;
        } else {
            Mat stacked = Mat::Zero(d, n);
            stacked.topRows(n) = -sys.atilde.at_node(i);
            stacked.bottomRows(free_dim) = k;
            gain_v[i] = lambda * stacked;
        }
        last_active = i;
    }

    MatrixPath gain_path(grid, std::move(gain_v));
    res.gain = gain_path;
    res.free_gain = gain_path;
    res.free_signal = MatrixPath(grid, std::move(zero_sig));
    return res;
}

}  // namespace irlq

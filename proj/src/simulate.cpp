#include "irlq/simulate.hpp"

#include "irlq/parallel.hpp"
#include "irlq/rng.hpp"
#include "irlq/synthesis.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace irlq {

SimulationBlowup::SimulationBlowup(std::size_t path_, double time_)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "simulated state exceeded 1e12 on path " << path_ << " at t=" << time_;
          return os.str();
      }()),
      path(path_),
      time(time_) {}

int worker_count() {
    int n = 1;
#ifdef _OPENMP
    n = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("IRLQ_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) {
            n = static_cast<int>(std::min<long>(n, v));
        }
    }
    return std::max(1, n);
}

namespace {

constexpr double kStateBlowupNorm = 1e12;

// Everything a path kernel needs, precomputed once per run.
struct SimContext {
    const LqProblem* p = nullptr;
    // Feedback controller (simulate) or exogenous signal (cost_of).
    const MatrixPath* gain = nullptr;    // m x n, may be null
    const MatrixPath* signal = nullptr;  // m x 1
    // Equilibrium-residual operators per node: resid = ||r_op x + r_c||.
    std::vector<Mat> r_op;
    std::vector<Mat> r_c;
    std::size_t resid_node_limit = 0;  // residual evaluated for node <= limit
    const Mat* constraint = nullptr;   // M for the terminal residual, may be null
    bool accumulate_nodes = false;
    std::uint64_t seed = 0;
};

// Per-block accumulator. Blocks are accumulated serially in path order and then
// merged in a fixed-shape pairwise tree, so the floating-point result does not
// depend on the number of threads.
struct BlockPartial {
    double cost_sum = 0.0;
    double cost_sq_sum = 0.0;
    double term_sum = 0.0;
    double resid_max = 0.0;
    std::vector<Vec> x_sum, x_sq_sum, u_sum;
    std::size_t blow_path = std::numeric_limits<std::size_t>::max();
    double blow_time = 0.0;

    void init(std::size_t nodes, Eigen::Index n, Eigen::Index m, bool accumulate) {
        if (!accumulate) return;
        x_sum.assign(nodes, Vec::Zero(n));
        x_sq_sum.assign(nodes, Vec::Zero(n));
        u_sum.assign(nodes, Vec::Zero(m));
    }

    void merge(const BlockPartial& o) {
        cost_sum += o.cost_sum;
        cost_sq_sum += o.cost_sq_sum;
        term_sum += o.term_sum;
        resid_max = std::max(resid_max, o.resid_max);
        for (std::size_t i = 0; i < x_sum.size(); ++i) {
            x_sum[i] += o.x_sum[i];
            x_sq_sum[i] += o.x_sq_sum[i];
            u_sum[i] += o.u_sum[i];
        }
        if (o.blow_path < blow_path) {
            blow_path = o.blow_path;
            blow_time = o.blow_time;
        }
    }
};

void simulate_one_path(const SimContext& ctx, std::size_t path, BlockPartial& bp) {
    const LqProblem& p = *ctx.p;
    const TimeGrid& grid = p.grid;
    const std::size_t nodes = grid.nodes();
    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);

    PathRng rng(ctx.seed, 0, path);
    Vec x = p.x0;
    double cost = 0.0;
    double resid = 0.0;

    for (std::size_t i = 0; i < nodes; ++i) {
        Vec u = ctx.signal->at_node(i).col(0);
        if (ctx.gain != nullptr) {
            u += ctx.gain->at_node(i) * x;
        }
        const double weight = (i == 0 || i + 1 == nodes) ? 0.5 * dt : dt;
        cost += weight * (x.dot(p.q.at_node(i) * x) + u.dot(p.r.at_node(i) * u));
        if (ctx.accumulate_nodes) {
            bp.x_sum[i] += x;
            bp.x_sq_sum[i] += x.cwiseProduct(x);
            bp.u_sum[i] += u;
        }
        if (!ctx.r_op.empty() && i <= ctx.resid_node_limit) {
            resid = std::max(resid, (ctx.r_op[i] * x + ctx.r_c[i]).norm());
        }
        if (i + 1 < nodes) {
            const double dw = sqrt_dt * rng.next_normal();
            x = x + dt * (p.a.at_node(i) * x + p.b.at_node(i) * u) +
                dw * (p.abar.at_node(i) * x + p.bbar.at_node(i) * u);
            if (!x.allFinite() || x.norm() > kStateBlowupNorm) {
                if (path < bp.blow_path) {
                    bp.blow_path = path;
                    bp.blow_time = grid.node(i + 1);
                }
                return;
            }
        }
    }
    cost += x.dot(p.h * x);
    bp.cost_sum += cost;
    bp.cost_sq_sum += cost * cost;
    bp.resid_max = std::max(bp.resid_max, resid);
    if (ctx.constraint != nullptr) {
        bp.term_sum += (*ctx.constraint * x).squaredNorm();
    }
}

BlockPartial run_paths(const SimContext& ctx, std::size_t paths, bool parallel) {
    const std::size_t nodes = ctx.p->grid.nodes();
    const std::size_t blocks = block_count(paths);
    std::vector<BlockPartial> partials(blocks);

    const auto run_block = [&](std::size_t b) {
        BlockPartial bp;
        bp.init(nodes, ctx.p->n, ctx.p->m, ctx.accumulate_nodes);
        const std::size_t lo = b * kPathBlock;
        const std::size_t hi = std::min(paths, lo + kPathBlock);
        for (std::size_t path = lo; path < hi; ++path) {
            simulate_one_path(ctx, path, bp);
        }
        partials[b] = std::move(bp);
    };

    if (parallel) {
#ifdef _OPENMP
        const int threads = worker_count();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
            run_block(static_cast<std::size_t>(b));
        }
#else
        for (std::size_t b = 0; b < blocks; ++b) run_block(b);
#endif
    } else {
        // Serial reference: same blocks, same in-block order, same merge tree.
        for (std::size_t b = 0; b < blocks; ++b) run_block(b);
    }

    // Fixed-shape pairwise merge, independent of thread scheduling.
    while (partials.size() > 1) {
        std::vector<BlockPartial> next;
        next.reserve((partials.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < partials.size(); i += 2) {
            partials[i].merge(partials[i + 1]);
            next.push_back(std::move(partials[i]));
        }
        if (partials.size() % 2 == 1) {
            next.push_back(std::move(partials.back()));
        }
        partials = std::move(next);
    }
    BlockPartial total = partials.empty() ? BlockPartial{} : std::move(partials.front());
    if (total.blow_path != std::numeric_limits<std::size_t>::max()) {
        throw SimulationBlowup(total.blow_path, total.blow_time);
    }
    return total;
}

std::size_t residual_node_limit(const TimeGrid& grid, double epsilon) {
    const double cutoff = grid.tT - epsilon + 1e-12 * (1.0 + std::abs(grid.tT));
    std::size_t limit = 0;
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        if (grid.node(i) <= cutoff) limit = i;
    }
    return limit;
}

double sample_stderr(double sum, double sq_sum, std::size_t n) {
    if (n < 2) return 0.0;
    const double mean = sum / static_cast<double>(n);
    const double var =
        std::max(0.0, (sq_sum - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
}

}  // namespace

SimulationReport simulate(const LqProblem& p, const ControllerSpec& ctrl,
                          const MonteCarloConfig& mc, double epsilon, bool parallel) {
    if (ctrl.gain.rows() != p.m || ctrl.gain.cols() != p.n || ctrl.signal.rows() != p.m) {
        throw DimensionError("simulate: controller dimensions do not match the problem");
    }
    if (mc.paths == 0) {
        throw ValidationError("simulate: paths must be >= 1");
    }
    const std::size_t nodes = p.grid.nodes();

    SimContext ctx;
    ctx.p = &p;
    ctx.gain = &ctrl.gain;
    ctx.signal = &ctrl.signal;
    ctx.constraint = &ctrl.terminal_constraint;
    ctx.accumulate_nodes = true;
    ctx.seed = mc.seed;
    ctx.resid_node_limit = residual_node_limit(p.grid, epsilon);
    ctx.r_op.resize(nodes);
    ctx.r_c.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        const Mat& ups = ctrl.upsilon0.at_node(i);
        ctx.r_op[i] = ups * ctrl.gain.at_node(i) + ctrl.eq_gain.at_node(i);
        ctx.r_c[i] = ups * ctrl.signal.at_node(i) + ctrl.eq_const.at_node(i);
    }

    const BlockPartial total = run_paths(ctx, mc.paths, parallel);
    const double n_d = static_cast<double>(mc.paths);

    SimulationReport rep;
    rep.paths = mc.paths;
    rep.seed = mc.seed;
    rep.cost_mean = total.cost_sum / n_d;
    rep.cost_stderr = sample_stderr(total.cost_sum, total.cost_sq_sum, mc.paths);
    rep.terminal_residual = total.term_sum / n_d;
    rep.mp_residual_max = total.resid_max;
    rep.state_mean.resize(nodes);
    rep.state_var.resize(nodes);
    rep.control_mean.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        const Vec mean = total.x_sum[i] / n_d;
        rep.state_mean[i] = mean;
        if (mc.paths > 1) {
            rep.state_var[i] = ((total.x_sq_sum[i] - n_d * mean.cwiseProduct(mean)) /
                                (n_d - 1.0))
                                   .cwiseMax(0.0);
        } else {
            rep.state_var[i] = Vec::Zero(p.n);
        }
        rep.control_mean[i] = total.u_sum[i] / n_d;
    }
    return rep;
}

double mp_residual(const LqProblem& p, const LayerStack& stack, const ControllerSpec& ctrl,
                   const std::vector<Vec>& states, double epsilon) {
    (void)stack;  // operator caches live on the controller
    const std::size_t nodes = p.grid.nodes();
    if (states.size() != nodes) {
        throw DimensionError("mp_residual: trajectory must be sampled at every grid node");
    }
    const std::size_t limit = residual_node_limit(p.grid, epsilon);
    double worst = 0.0;
    for (std::size_t i = 0; i <= limit; ++i) {
        const Mat& ups = ctrl.upsilon0.at_node(i);
        const Vec u = ctrl.gain.at_node(i) * states[i] + ctrl.signal.at_node(i).col(0);
        const Vec lhs = ups * u + ctrl.eq_gain.at_node(i) * states[i] + ctrl.eq_const.at_node(i).col(0);
        worst = std::max(worst, lhs.norm());
    }
    return worst;
}

CostEstimate cost_of(const LqProblem& p, const MatrixPath& controls, const MonteCarloConfig& mc) {
    if (controls.rows() != p.m || controls.cols() != 1) {
        throw DimensionError("cost_of: control signal must be m x 1 on the grid");
    }
    if (mc.paths == 0) {
        throw ValidationError("cost_of: paths must be >= 1");
    }
    SimContext ctx;
    ctx.p = &p;
    ctx.signal = &controls;
    ctx.seed = mc.seed;

    const BlockPartial total = run_paths(ctx, mc.paths, true);
    CostEstimate est;
    est.mean = total.cost_sum / static_cast<double>(mc.paths);
    est.stderr_ = sample_stderr(total.cost_sum, total.cost_sq_sum, mc.paths);
    return est;
}

DpOracleResult dp_oracle(const LqProblem& p) {
    const TimeGrid& grid = p.grid;
    const std::size_t nodes = grid.nodes();
    const double dt = grid.dt();
    const Mat eye = Mat::Identity(p.n, p.n);

    Mat s = p.h;
    std::vector<Mat> gains(nodes, Mat::Zero(p.m, p.n));
    for (std::size_t idx = nodes - 1; idx-- > 0;) {
        const Mat f = eye + dt * p.a.at_node(idx);
        const Mat g = dt * p.b.at_node(idx);
        const Mat& abar = p.abar.at_node(idx);
        const Mat& bbar = p.bbar.at_node(idx);
        const Mat theta = dt * p.r.at_node(idx) + g.transpose() * s * g +
                          dt * bbar.transpose() * s * bbar;
        const Mat l = g.transpose() * s * f + dt * bbar.transpose() * s * abar;
        const auto lu = theta.fullPivLu();
        if (!lu.isInvertible()) {
            std::ostringstream os;
            os << "discrete input-weight block singular at node " << idx;
            throw OracleInapplicable(os.str());
        }
        const Mat k = -lu.solve(l);
        gains[idx] = k;
        Mat s_next = dt * p.q.at_node(idx) + f.transpose() * s * f +
                     dt * abar.transpose() * s * abar + l.transpose() * k;
        s = 0.5 * (s_next + s_next.transpose());
    }
    gains[nodes - 1] = gains[nodes - 2];

    DpOracleResult out;
    out.cost = p.x0.dot(s * p.x0);
    out.gains = MatrixPath(grid, std::move(gains));
    return out;
}

ConvexityReport convexity_probe(const LqProblem& p, std::size_t num_controls,
                                std::uint64_t seed) {
    constexpr std::size_t kSegments = 8;
    LqProblem probe = p;
    probe.x0 = Vec::Zero(p.n);

    MonteCarloConfig mc;
    mc.paths = std::min<std::size_t>(2000, p.solver.mc_paths);
    mc.seed = p.solver.seed;

    const std::size_t nodes = probe.grid.nodes();
    ConvexityReport rep;
    rep.min_cost_observed = 0.0;  // candidate 0: the zero control, cost exactly 0 from x0 = 0
    rep.violated = false;

    for (std::size_t c = 0; c < num_controls; ++c) {
        PathRng rng(seed, 1, c);
        std::vector<Mat> seg(kSegments, Mat::Zero(p.m, 1));
        for (auto& sv : seg) {
            for (Eigen::Index r = 0; r < p.m; ++r) sv(r, 0) = rng.next_normal();
        }
        std::vector<Mat> samples(nodes);
        for (std::size_t i = 0; i < nodes; ++i) {
            const std::size_t s_idx = std::min(kSegments - 1, i * kSegments / nodes);
            samples[i] = seg[s_idx];
        }
        const CostEstimate est = cost_of(probe, MatrixPath(probe.grid, std::move(samples)), mc);
        rep.min_cost_observed = std::min(rep.min_cost_observed, est.mean);
        if (est.mean < -3.0 * est.stderr_) {
            rep.violated = true;
        }
    }
    return rep;
}

}  // namespace irlq

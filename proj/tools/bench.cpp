#include "irlq/parallel.hpp"
#include "irlq/report.hpp"

#include <chrono>
#include <cstdio>
#include <string>

// Times the Monte Carlo path kernel: serial reference vs the OpenMP version,
// on the bundled worked example, and checks that the two are bit-identical.

using namespace irlq;

namespace {

double time_once(const LqProblem& p, const ControllerSpec& ctrl, const MonteCarloConfig& mc,
                 double eps, bool parallel, SimulationReport& out) {
    const auto t0 = std::chrono::steady_clock::now();
    out = simulate(p, ctrl, mc, eps, parallel);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    std::string file = std::string(IRLQ_DATA_DIR) + "/irregular_everywhere.json";
    std::size_t paths = 200000;
    if (argc > 1) file = argv[1];
    if (argc > 2) paths = static_cast<std::size_t>(std::stoull(argv[2]));

    LqProblem p = load_problem_file(file);
    SolveOutcome outcome = solve_problem(p);
    const ControllerSpec* ctrl =
        outcome.closed ? &*outcome.closed : (outcome.open ? &*outcome.open : nullptr);
    if (ctrl == nullptr) {
        std::fprintf(stderr, "no controller available for %s\n", file.c_str());
        return 1;
    }

    MonteCarloConfig mc;
    mc.paths = paths;
    mc.seed = p.solver.seed;
    const double eps = p.solver.epsilon_for(p.grid);

    std::printf("problem: %s  paths: %zu  nodes: %zu  workers: %d\n", file.c_str(), paths,
                p.grid.nodes(), worker_count());

    SimulationReport serial, parallel;
    // Warm-up pass so page faults and lazy allocations hit neither timing.
    SimulationReport warm;
    time_once(p, *ctrl, mc, eps, true, warm);

    const double t_serial = time_once(p, *ctrl, mc, eps, false, serial);
    const double t_parallel = time_once(p, *ctrl, mc, eps, true, parallel);

    std::printf("serial reference: %8.3f s  (%.1f kpaths/s)\n", t_serial,
                paths / t_serial / 1e3);
    std::printf("openmp kernel:    %8.3f s  (%.1f kpaths/s)\n", t_parallel,
                paths / t_parallel / 1e3);
    std::printf("speedup:          %8.2fx\n", t_serial / t_parallel);

    const bool identical = serial.cost_mean == parallel.cost_mean &&
                           serial.cost_stderr == parallel.cost_stderr &&
                           serial.terminal_residual == parallel.terminal_residual &&
                           serial.mp_residual_max == parallel.mp_residual_max;
    std::printf("bit-identical results: %s\n", identical ? "yes" : "NO");
    return identical ? 0 : 1;
}

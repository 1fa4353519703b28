#include "irlq/report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace irlq;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open " + path.string() + " for writing");
    f << text;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<Mat> load_candidates_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError(path + ": expected an array of matrices");
    std::vector<Mat> out;
    for (const auto& mj : j) {
        if (!mj.is_array() || mj.empty()) throw ParseError(path + ": expected matrices");
        const Eigen::Index rows = static_cast<Eigen::Index>(mj.size());
        const Eigen::Index cols = static_cast<Eigen::Index>(mj[0].size());
        Mat m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (static_cast<Eigen::Index>(mj[static_cast<std::size_t>(r)].size()) != cols) {
                throw ParseError(path + ": ragged matrix rows");
            }
            for (Eigen::Index c = 0; c < cols; ++c) {
                m(r, c) = mj[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
            }
        }
        require_finite(m, "terminal candidate");
        out.push_back(std::move(m));
    }
    return out;
}

void write_timings(const fs::path& dir, const std::map<std::string, double>& timings) {
    nlohmann::json j;
    for (const auto& [name, secs] : timings) j[name] = secs;
    write_text_file(dir / "timings.json", j.dump(2) + "\n");
}

int verdict_exit_code(const Verdict& v) {
    if (std::holds_alternative<Unsolvable>(v)) return 2;
    if (std::holds_alternative<Inconclusive>(v)) return 3;
    return 0;  // Regular or IrregularSolvable
}

// Preferred branch for embedded simulation: closed loop when available.
const std::optional<ControllerSpec>* pick_branch(const SolveOutcome& outcome, bool open_loop) {
    if (open_loop) return outcome.open ? &outcome.open : nullptr;
    return outcome.closed ? &outcome.closed : nullptr;
}

int cmd_solve(const std::string& problem_path, const std::string& out_dir,
              std::optional<double> rtol, const std::string& candidates_path,
              bool with_simulation) {
    const auto t0 = std::chrono::steady_clock::now();
    LqProblem p = load_problem_file(problem_path);
    if (rtol) {
        if (*rtol <= 0) throw ValidationError("--rtol must be positive");
        p.solver.rtol = *rtol;
    }
    if (!candidates_path.empty()) {
        for (Mat& m : load_candidates_file(candidates_path)) {
            if (m.rows() != p.n || m.cols() != p.n) {
                throw ValidationError("terminal candidate dimensions must be n x n");
            }
            p.solver.terminal_candidates.push_back(std::move(m));
        }
    }

    SolveOutcome outcome = solve_problem(p);
    outcome.report.timings["solve_seconds"] = seconds_since(t0);

    if (with_simulation) {
        const auto* branch = pick_branch(outcome, /*open_loop=*/!outcome.closed);
        if (branch == nullptr) {
            std::cerr << "irlq: --simulate requested but no controller is available\n";
        } else {
            const auto t1 = std::chrono::steady_clock::now();
            MonteCarloConfig mc;
            mc.paths = p.solver.mc_paths;
            mc.seed = p.solver.seed;
            outcome.report.simulation =
                simulate(p, **branch, mc, p.solver.epsilon_for(p.grid));
            outcome.report.timings["simulate_seconds"] = seconds_since(t1);
        }
    }

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_text_file(dir / "report.json", serialize_report(outcome.report));
    write_controller_csv((dir / "controller.csv").string(), p.grid, outcome.closed, outcome.open);
    write_riccati_csv((dir / "riccati.csv").string(), p, outcome.stack);
    write_timings(dir, outcome.report.timings);

    std::cout << render_report_text(outcome.report);
    return verdict_exit_code(outcome.report.verdict);
}

int cmd_simulate(const std::string& problem_path, bool resolve, const std::string& controller_dir,
                 std::optional<std::size_t> paths, std::optional<std::uint64_t> seed,
                 std::optional<double> epsilon, bool open_loop, const std::string& out_dir) {
    LqProblem p = load_problem_file(problem_path);
    if (epsilon) {
        if (*epsilon <= 0 || *epsilon >= p.grid.tT - p.grid.t0) {
            throw ValidationError("--epsilon must lie in (0, T - t0)");
        }
        p.solver.epsilon_clamp = *epsilon;
    }
    MonteCarloConfig mc;
    mc.paths = paths.value_or(p.solver.mc_paths);
    mc.seed = seed.value_or(p.solver.seed);
    const double eps = p.solver.epsilon_for(p.grid);

    const auto t0 = std::chrono::steady_clock::now();
    SolveOutcome outcome = solve_problem(p);
    const std::optional<ControllerSpec>* branch = pick_branch(outcome, open_loop);
    if (branch == nullptr) {
        const BranchSummary& b = open_loop ? outcome.report.open_loop : outcome.report.closed_loop;
        std::cerr << "irlq: the " << (open_loop ? "open" : "closed")
                  << "-loop controller is unavailable for this problem";
        if (!b.error.empty()) std::cerr << " (" << b.error << ")";
        std::cerr << "\n";
        return 1;
    }
    ControllerSpec ctrl = **branch;

    if (!resolve && !controller_dir.empty()) {
        // Loaded gains/signals replace the freshly solved ones; the equilibrium
        // operator caches stay with the solve, so foreign controllers are scored
        // against this problem's stationarity condition.
        const LoadedController loaded =
            load_controller_csv((fs::path(controller_dir) / "controller.csv").string(), p.grid);
        if (open_loop) {
            if (!loaded.open_gain && !loaded.open_signal) {
                std::cerr << "irlq: controller.csv has no open-loop columns\n";
                return 1;
            }
            if (loaded.open_gain) {
                if (loaded.open_gain->rows() != p.m || loaded.open_gain->cols() != p.n) {
                    std::cerr << "irlq: open-loop gain in controller.csv does not match the "
                                 "problem dimensions\n";
                    return 1;
                }
                ctrl.gain = *loaded.open_gain;
            } else {
                ctrl.gain = MatrixPath::constant(p.grid, Mat::Zero(p.m, p.n));
            }
            if (loaded.open_signal) {
                if (loaded.open_signal->rows() != p.m) {
                    std::cerr << "irlq: open-loop signal in controller.csv does not match the "
                                 "problem dimensions\n";
                    return 1;
                }
                ctrl.signal = *loaded.open_signal;
            } else {
                ctrl.signal = MatrixPath::constant(p.grid, Mat::Zero(p.m, 1));
            }
        } else {
            if (!loaded.closed_gain) {
                std::cerr << "irlq: controller.csv has no closed-loop gain columns\n";
                return 1;
            }
            if (loaded.closed_gain->rows() != p.m || loaded.closed_gain->cols() != p.n) {
                std::cerr << "irlq: closed-loop gain in controller.csv does not match the "
                             "problem dimensions\n";
                return 1;
            }
            ctrl.gain = *loaded.closed_gain;
            ctrl.signal = MatrixPath::constant(p.grid, Mat::Zero(p.m, 1));
        }
    }

    const SimulationReport rep = simulate(p, ctrl, mc, eps);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_text_file(dir / "simulation.json", serialize_simulation(rep));
    write_trajectory_csv((dir / "trajectory.csv").string(), p.grid, rep);
    std::map<std::string, double> timings;
    timings["simulate_seconds"] = seconds_since(t0);
    write_timings(dir, timings);

    std::cout << "cost = " << rep.cost_mean << " +/- " << rep.cost_stderr << " (stderr)\n"
              << "terminal residual E||Mx(T)||^2 = " << rep.terminal_residual << "\n"
              << "equilibrium residual max = " << rep.mp_residual_max << "\n";
    return 0;
}

int cmd_report(const std::string& dir_path) {
    const fs::path dir(dir_path);
    if (!fs::exists(dir / "report.json")) {
        std::cerr << "irlq: no report.json in " << dir_path << "\n";
        return 1;
    }
    RunReport rep = parse_report(read_text_file(dir / "report.json"));
    if (!rep.simulation && fs::exists(dir / "simulation.json")) {
        rep.simulation = parse_simulation(read_text_file(dir / "simulation.json"));
    }
    std::cout << render_report_text(rep);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-horizon stochastic LQ solver with irregular-case layer reduction"};
    app.require_subcommand(1);

    // solve
    std::string solve_problem_path, solve_out = ".", solve_candidates;
    std::optional<double> solve_rtol;
    bool solve_simulate = false;
    CLI::App* solve = app.add_subcommand("solve", "analyze a problem and synthesize controllers");
    solve->add_option("problem", solve_problem_path, "problem JSON file")->required();
    solve->add_option("--out", solve_out, "output directory (default: .)");
    solve->add_option("--rtol", solve_rtol, "rank/pseudoinverse tolerance override");
    solve->add_option("--terminal-candidates", solve_candidates,
                      "JSON file with extra terminal-value candidates (array of matrices)");
    solve->add_flag("--simulate", solve_simulate,
                    "embed a Monte Carlo validation of the synthesized controller");

    // simulate
    std::string sim_problem_path, sim_controller, sim_out = ".";
    bool sim_resolve = false, sim_open = false, sim_closed = false;
    std::optional<std::size_t> sim_paths;
    std::optional<std::uint64_t> sim_seed;
    std::optional<double> sim_epsilon;
    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo validation of a controller");
    sim->add_option("problem", sim_problem_path, "problem JSON file")->required();
    sim->add_flag("--resolve", sim_resolve, "solve first and simulate the result");
    sim->add_option("--controller", sim_controller, "directory containing controller.csv");
    sim->add_option("--paths", sim_paths, "number of Monte Carlo paths");
    sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_option("--epsilon", sim_epsilon, "terminal clamp width");
    sim->add_flag("--open-loop", sim_open, "simulate the open-loop branch");
    sim->add_flag("--closed-loop", sim_closed, "simulate the closed-loop branch (default)");
    sim->add_option("--out", sim_out, "output directory (default: .)");

    // report
    std::string report_dir;
    CLI::App* rep = app.add_subcommand("report", "render a human-readable run summary");
    rep->add_option("dir", report_dir, "directory with report.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            return cmd_solve(solve_problem_path, solve_out, solve_rtol, solve_candidates,
                             solve_simulate);
        }
        if (sim->parsed()) {
            if (sim_open && sim_closed) {
                std::cerr << "irlq: pass at most one of --open-loop/--closed-loop\n";
                return 1;
            }
            return cmd_simulate(sim_problem_path, sim_resolve, sim_controller, sim_paths, sim_seed,
                                sim_epsilon, sim_open, sim_out);
        }
        if (rep->parsed()) {
            return cmd_report(report_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "irlq: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

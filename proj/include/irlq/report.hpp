#pragma once

#include "irlq/simulate.hpp"

#include <map>
#include <optional>
#include <string>

// Run orchestration and artifact serialization shared by the CLI and the tests:
// solve pipeline (reduce + both steering branches + verdict demotion when no
// controller is synthesizable), the machine-readable RunReport, and the CSV
// formats for controllers, Riccati paths, and trajectories.
//
// Wall-clock timings live in RunReport but are serialized to a separate
// timings.json: report.json must be bit-identical across thread counts, and
// timings never are.

namespace irlq {

struct LayerSummary {
    std::size_t k = 0;
    Eigen::Index m_k = 0;
    Eigen::Index upsilon_rank = 0;
    std::size_t singular_nodes = 0;
    Mat chosen_terminal;
    std::vector<SideConditionReport> diagnostics;
};

struct BranchSummary {
    bool available = false;
    std::string error;  // why synthesis failed; empty when available
    double max_gain_entry = 0.0;
    double max_signal_entry = 0.0;
    std::optional<double> gramian_condition;
};

struct RunReport {
    Verdict verdict = Regular{};
    std::vector<LayerSummary> layer_summaries;
    Mat terminal_constraint;  // zero matrix when no constraint applies
    double epsilon = 0.0;
    double rtol = kDefaultRtol;
    BranchSummary closed_loop;
    BranchSummary open_loop;
    std::optional<SimulationReport> simulation;
    std::map<std::string, double> timings;  // not part of report.json
};

struct SolveOutcome {
    LayerStack stack;
    std::optional<ControllerSpec> closed;
    std::optional<ControllerSpec> open;
    RunReport report;  // simulation field left empty here
};

// reduce + reconstruct both branches. If the verdict is IrregularSolvable with a
// nontrivial terminal constraint and neither branch can be synthesized, the
// verdict is demoted to Inconclusive (a constraint we cannot steer to).
SolveOutcome solve_problem(const LqProblem& p);

std::string serialize_report(const RunReport& r);
RunReport parse_report(const std::string& text);

std::string serialize_simulation(const SimulationReport& r);
SimulationReport parse_simulation(const std::string& text);

// controller.csv: header + one row per node; closed-loop gain columns
// gain_<i>_<j>, open-loop gain columns open_gain_<i>_<j>, open-loop signal
// columns open_signal_<i>. Branch columns appear only when that branch exists.
void write_controller_csv(const std::string& path, const TimeGrid& grid,
                          const std::optional<ControllerSpec>& closed,
                          const std::optional<ControllerSpec>& open);

struct LoadedController {
    std::optional<MatrixPath> closed_gain;
    std::optional<MatrixPath> open_gain;
    std::optional<MatrixPath> open_signal;
    std::size_t nodes = 0;
};

LoadedController load_controller_csv(const std::string& path, const TimeGrid& grid);

// riccati.csv: one row per (layer, node) with P, Upsilon, Gamma entries; layers
// of smaller dimension leave the unused columns empty.
void write_riccati_csv(const std::string& path, const LqProblem& p, const LayerStack& stack);

// trajectory.csv: t, mean(x_1..x_n), var(x_1..x_n), u_1..u_m (mean over paths).
void write_trajectory_csv(const std::string& path, const TimeGrid& grid,
                          const SimulationReport& r);

// Human-readable rendering for the report command.
std::string render_report_text(const RunReport& r);

}  // namespace irlq

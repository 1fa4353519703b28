#include "irlq/report.hpp"

#include <nlohmann/json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace irlq {

using nlohmann::json;

namespace {

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("expected a matrix (array of arrays)");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ParseError("ragged matrix rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Vec vec_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("expected a vector (array)");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

json verdict_to_json(const Verdict& v) {
    json out;
    out["kind"] = verdict_kind(v);
    if (const auto* irr = std::get_if<IrregularSolvable>(&v)) {
        out["depth"] = irr->depth;
        out["terminal_constraint"] = mat_to_json(irr->terminal_constraint);
    } else if (const auto* uns = std::get_if<Unsolvable>(&v)) {
        out["depth"] = uns->depth;
    } else if (const auto* inc = std::get_if<Inconclusive>(&v)) {
        out["reason"] = inc->reason;
    }
    return out;
}

Verdict verdict_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "Regular") return Regular{};
    if (kind == "IrregularSolvable") {
        IrregularSolvable v;
        v.depth = j.at("depth").get<std::size_t>();
        v.terminal_constraint = mat_from_json(j.at("terminal_constraint"));
        return v;
    }
    if (kind == "Unsolvable") return Unsolvable{j.at("depth").get<std::size_t>()};
    if (kind == "Inconclusive") return Inconclusive{j.at("reason").get<std::string>()};
    throw ParseError("unknown verdict kind: " + kind);
}

ConditionId condition_from_string(const std::string& s) {
    if (s == "Z17") return ConditionId::Z17;
    if (s == "Z3") return ConditionId::Z3;
    if (s == "SEC20") return ConditionId::SEC20;
    if (s == "SEC16") return ConditionId::SEC16;
    if (s == "JNJ5") return ConditionId::JNJ5;
    throw ParseError("unknown side condition id: " + s);
}

json branch_to_json(const BranchSummary& b) {
    json out;
    out["available"] = b.available;
    out["error"] = b.error;
    out["max_gain_entry"] = b.max_gain_entry;
    out["max_signal_entry"] = b.max_signal_entry;
    out["gramian_condition"] = b.gramian_condition ? json(*b.gramian_condition) : json(nullptr);
    return out;
}

BranchSummary branch_from_json(const json& j) {
    BranchSummary b;
    b.available = j.at("available").get<bool>();
    b.error = j.at("error").get<std::string>();
    b.max_gain_entry = j.at("max_gain_entry").get<double>();
    b.max_signal_entry = j.at("max_signal_entry").get<double>();
    if (!j.at("gramian_condition").is_null()) {
        b.gramian_condition = j.at("gramian_condition").get<double>();
    }
    return b;
}

json simulation_to_json(const SimulationReport& r) {
    json out;
    out["cost_mean"] = r.cost_mean;
    out["cost_stderr"] = r.cost_stderr;
    out["terminal_residual"] = r.terminal_residual;
    out["mp_residual_max"] = r.mp_residual_max;
    out["paths"] = r.paths;
    out["seed"] = r.seed;
    json sm = json::array(), sv = json::array(), cm = json::array();
    for (const Vec& v : r.state_mean) sm.push_back(vec_to_json(v));
    for (const Vec& v : r.state_var) sv.push_back(vec_to_json(v));
    for (const Vec& v : r.control_mean) cm.push_back(vec_to_json(v));
    out["state_mean"] = std::move(sm);
    out["state_var"] = std::move(sv);
    out["control_mean"] = std::move(cm);
    return out;
}

SimulationReport simulation_from_json(const json& j) {
    SimulationReport r;
    r.cost_mean = j.at("cost_mean").get<double>();
    r.cost_stderr = j.at("cost_stderr").get<double>();
    r.terminal_residual = j.at("terminal_residual").get<double>();
    r.mp_residual_max = j.at("mp_residual_max").get<double>();
    r.paths = j.at("paths").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const json& v : j.at("state_mean")) r.state_mean.push_back(vec_from_json(v));
    for (const json& v : j.at("state_var")) r.state_var.push_back(vec_from_json(v));
    for (const json& v : j.at("control_mean")) r.control_mean.push_back(vec_from_json(v));
    return r;
}

double max_abs_entry(const MatrixPath& path) {
    double worst = 0.0;
    for (const Mat& m : path.samples()) {
        if (m.size() > 0) worst = std::max(worst, m.cwiseAbs().maxCoeff());
    }
    return worst;
}

BranchSummary summarize_branch(const std::optional<ControllerSpec>& ctrl,
                               const std::string& error) {
    BranchSummary b;
    if (!ctrl) {
        b.error = error;
        return b;
    }
    b.available = true;
    b.max_gain_entry = max_abs_entry(ctrl->gain);
    b.max_signal_entry = max_abs_entry(ctrl->signal);
    if (ctrl->steering && ctrl->steering->gramian_condition) {
        b.gramian_condition = *ctrl->steering->gramian_condition;
    }
    return b;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_matrix(const Mat& m) {
    std::ostringstream os;
    os << "[";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        os << "[";
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) os << ", ";
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.6g", m(r, c));
            os << buf;
        }
        os << "]";
        if (r + 1 < m.rows()) os << ", ";
    }
    os << "]";
    return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

SolveOutcome solve_problem(const LqProblem& p) {
    SolveOutcome out;
    out.stack = reduce(p);
    const LayerStack& stack = out.stack;

    RunReport& rep = out.report;
    rep.verdict = stack.verdict;
    rep.rtol = p.solver.rtol;
    rep.epsilon = p.solver.epsilon_for(p.grid);
    rep.terminal_constraint = Mat::Zero(p.n, p.n);

    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        const LayerRecord& rec = stack.layers[i];
        LayerSummary s;
        s.k = i + 1;
        s.m_k = rec.m_k;
        s.upsilon_rank = rec.riccati.rank_at_front();
        s.singular_nodes = rec.riccati.singular_nodes.size();
        s.chosen_terminal = rec.chosen_terminal;
        s.diagnostics = rec.diagnostics;
        rep.layer_summaries.push_back(std::move(s));
    }

    if (std::holds_alternative<Regular>(stack.verdict)) {
        out.closed = reconstruct_controller(stack, SteerMode::closed_loop);
        out.open = reconstruct_controller(stack, SteerMode::open_loop);
        rep.closed_loop = summarize_branch(out.closed, "");
        rep.open_loop = summarize_branch(out.open, "");
        return out;
    }

    const auto* irr = std::get_if<IrregularSolvable>(&stack.verdict);
    if (irr == nullptr) {
        const std::string why = "no controller for verdict " + verdict_kind(stack.verdict);
        rep.closed_loop = summarize_branch(std::nullopt, why);
        rep.open_loop = summarize_branch(std::nullopt, why);
        return out;
    }

    rep.terminal_constraint = irr->terminal_constraint;
    const bool constraint_trivial =
        irr->terminal_constraint.size() == 0 ||
        irr->terminal_constraint.cwiseAbs().maxCoeff() <= stack.rtol;

    std::string closed_err, open_err;
    if (constraint_trivial) {
        // Nothing to steer: the free input is zero in both branches.
        out.closed = reconstruct_controller(stack, SteerMode::closed_loop);
        out.open = reconstruct_controller(stack, SteerMode::open_loop);
    } else {
        const ReducedSystem sys = reduced_exit_system(stack);
        try {
            SteeringResult sr = closed_loop_steer(sys, p.grid, rep.epsilon, stack.rtol);
            out.closed = reconstruct_controller(stack, SteerMode::closed_loop, std::move(sr));
        } catch (const std::runtime_error& e) {
            closed_err = e.what();
        }
        try {
            MonteCarloConfig mc;
            mc.paths = p.solver.mc_paths;
            mc.seed = p.solver.seed;
            SteeringResult sr = open_loop_steer(sys, p.x0, p.grid, mc, stack.rtol);
            out.open = reconstruct_controller(stack, SteerMode::open_loop, std::move(sr));
        } catch (const std::runtime_error& e) {
            open_err = e.what();
        }
        if (!out.closed && !out.open) {
            // A terminal constraint we cannot steer to in either branch: the
            // reduction alone does not certify solvability.
            rep.verdict = Inconclusive{
                "terminal constraint present but neither steering branch is synthesizable "
                "(closed-loop: " +
                closed_err + "; open-loop: " + open_err + ")"};
        }
    }
    rep.closed_loop = summarize_branch(out.closed, closed_err);
    rep.open_loop = summarize_branch(out.open, open_err);
    return out;
}

std::string serialize_report(const RunReport& r) {
    json out;
    out["verdict"] = verdict_to_json(r.verdict);
    json layers = json::array();
    for (const LayerSummary& s : r.layer_summaries) {
        json l;
        l["k"] = s.k;
        l["m_k"] = static_cast<std::int64_t>(s.m_k);
        l["upsilon_rank"] = static_cast<std::int64_t>(s.upsilon_rank);
        l["singular_nodes"] = s.singular_nodes;
        l["chosen_terminal"] = mat_to_json(s.chosen_terminal);
        json diags = json::array();
        for (const SideConditionReport& d : s.diagnostics) {
            json dj;
            dj["condition"] = to_string(d.condition_id);
            dj["max_violation"] = d.max_violation;
            dj["nodes_violated"] = d.nodes_violated;
            diags.push_back(std::move(dj));
        }
        l["diagnostics"] = std::move(diags);
        layers.push_back(std::move(l));
    }
    out["layers"] = std::move(layers);
    out["terminal_constraint"] = mat_to_json(r.terminal_constraint);
    out["epsilon"] = r.epsilon;
    out["rtol"] = r.rtol;
    out["closed_loop"] = branch_to_json(r.closed_loop);
    out["open_loop"] = branch_to_json(r.open_loop);
    if (r.simulation) {
        out["simulation"] = simulation_to_json(*r.simulation);
    }
    return out.dump(2) + "\n";
}

RunReport parse_report(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("report.json: ") + e.what());
    }
    try {
        RunReport r;
        r.verdict = verdict_from_json(j.at("verdict"));
        for (const json& l : j.at("layers")) {
            LayerSummary s;
            s.k = l.at("k").get<std::size_t>();
            s.m_k = l.at("m_k").get<std::int64_t>();
            s.upsilon_rank = l.at("upsilon_rank").get<std::int64_t>();
            s.singular_nodes = l.at("singular_nodes").get<std::size_t>();
            s.chosen_terminal = mat_from_json(l.at("chosen_terminal"));
            for (const json& dj : l.at("diagnostics")) {
                SideConditionReport d;
                d.condition_id = condition_from_string(dj.at("condition").get<std::string>());
                d.max_violation = dj.at("max_violation").get<double>();
                d.nodes_violated = dj.at("nodes_violated").get<std::size_t>();
                s.diagnostics.push_back(d);
            }
            r.layer_summaries.push_back(std::move(s));
        }
        r.terminal_constraint = mat_from_json(j.at("terminal_constraint"));
        r.epsilon = j.at("epsilon").get<double>();
        r.rtol = j.at("rtol").get<double>();
        r.closed_loop = branch_from_json(j.at("closed_loop"));
        r.open_loop = branch_from_json(j.at("open_loop"));
        if (j.contains("simulation")) {
            r.simulation = simulation_from_json(j.at("simulation"));
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("report.json: ") + e.what());
    }
}

std::string serialize_simulation(const SimulationReport& r) {
    return simulation_to_json(r).dump(2) + "\n";
}

SimulationReport parse_simulation(const std::string& text) {
    try {
        return simulation_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ParseError(std::string("simulation.json: ") + e.what());
    }
}

void write_controller_csv(const std::string& path, const TimeGrid& grid,
                          const std::optional<ControllerSpec>& closed,
                          const std::optional<ControllerSpec>& open) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open " + path + " for writing");

    std::ostringstream header;
    header << "t";
    if (closed) {
        for (Eigen::Index i = 0; i < closed->gain.rows(); ++i) {
            for (Eigen::Index j = 0; j < closed->gain.cols(); ++j) {
                header << ",gain_" << (i + 1) << "_" << (j + 1);
            }
        }
    }
    if (open) {
        for (Eigen::Index i = 0; i < open->gain.rows(); ++i) {
            for (Eigen::Index j = 0; j < open->gain.cols(); ++j) {
                header << ",open_gain_" << (i + 1) << "_" << (j + 1);
            }
        }
        for (Eigen::Index i = 0; i < open->signal.rows(); ++i) {
            header << ",open_signal_" << (i + 1);
        }
    }
    f << header.str() << "\n";

    for (std::size_t node = 0; node < grid.nodes(); ++node) {
        f << fmt_double(grid.node(node));
        if (closed) {
            const Mat& g = closed->gain.at_node(node);
            for (Eigen::Index i = 0; i < g.rows(); ++i) {
                for (Eigen::Index j = 0; j < g.cols(); ++j) {
                    f << "," << fmt_double(g(i, j));
                }
            }
        }
        if (open) {
            const Mat& g = open->gain.at_node(node);
            for (Eigen::Index i = 0; i < g.rows(); ++i) {
                for (Eigen::Index j = 0; j < g.cols(); ++j) {
                    f << "," << fmt_double(g(i, j));
                }
            }
            const Mat& s = open->signal.at_node(node);
            for (Eigen::Index i = 0; i < s.rows(); ++i) {
                f << "," << fmt_double(s(i, 0));
            }
        }
        f << "\n";
    }
}

LoadedController load_controller_csv(const std::string& path, const TimeGrid& grid) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ParseError(path + ": empty file");
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "t") {
        throw ParseError(path + ": first column must be t");
    }

    struct ColRef {
        enum Kind { closed_gain, open_gain, open_signal } kind;
        Eigen::Index i = 0, j = 0;
    };
    std::vector<std::optional<ColRef>> cols(header.size());
    Eigen::Index cg_rows = 0, cg_cols = 0, og_rows = 0, og_cols = 0, os_rows = 0;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string& h = header[c];
        ColRef ref;
        int i = 0, j = 0;
        if (std::sscanf(h.c_str(), "gain_%d_%d", &i, &j) == 2) {
            ref.kind = ColRef::closed_gain;
        } else if (std::sscanf(h.c_str(), "open_gain_%d_%d", &i, &j) == 2) {
            ref.kind = ColRef::open_gain;
        } else if (std::sscanf(h.c_str(), "open_signal_%d", &i) == 1) {
            ref.kind = ColRef::open_signal;
            j = 1;
        } else {
            throw ParseError(path + ": unrecognized column " + h);
        }
        if (i < 1 || j < 1) throw ParseError(path + ": bad column index in " + h);
        ref.i = i - 1;
        ref.j = j - 1;
        cols[c] = ref;
        if (ref.kind == ColRef::closed_gain) {
            cg_rows = std::max(cg_rows, ref.i + 1);
            cg_cols = std::max(cg_cols, ref.j + 1);
        } else if (ref.kind == ColRef::open_gain) {
            og_rows = std::max(og_rows, ref.i + 1);
            og_cols = std::max(og_cols, ref.j + 1);
        } else {
            os_rows = std::max(os_rows, ref.i + 1);
        }
    }

    const std::size_t nodes = grid.nodes();
    std::vector<Mat> cg(nodes), og(nodes), os(nodes);
    for (std::size_t node = 0; node < nodes; ++node) {
        if (!std::getline(f, line)) {
            throw ParseError(path + ": expected " + std::to_string(nodes) + " data rows");
        }
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(path + ": row has " + std::to_string(cells.size()) +
                             " cells, header has " + std::to_string(header.size()));
        }
        cg[node] = Mat::Zero(cg_rows, cg_cols);
        og[node] = Mat::Zero(og_rows, og_cols);
        os[node] = Mat::Zero(os_rows, 1);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const double v = std::strtod(cells[c].c_str(), nullptr);
            const ColRef& ref = *cols[c];
            switch (ref.kind) {
                case ColRef::closed_gain: cg[node](ref.i, ref.j) = v; break;
                case ColRef::open_gain: og[node](ref.i, ref.j) = v; break;
                case ColRef::open_signal: os[node](ref.i, 0) = v; break;
            }
        }
    }

    LoadedController out;
    out.nodes = nodes;
    if (cg_rows > 0) out.closed_gain = MatrixPath(grid, std::move(cg));
    if (og_rows > 0) out.open_gain = MatrixPath(grid, std::move(og));
    if (os_rows > 0) out.open_signal = MatrixPath(grid, std::move(os));
    return out;
}

void write_riccati_csv(const std::string& path, const LqProblem& p, const LayerStack& stack) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open " + path + " for writing");

    const Eigen::Index n = p.n;
    const Eigen::Index m = p.m;
    std::ostringstream header;
    header << "layer,t";
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) header << ",p_" << (i + 1) << "_" << (j + 1);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) header << ",upsilon_" << (i + 1) << "_" << (j + 1);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) header << ",gamma_" << (i + 1) << "_" << (j + 1);
    f << header.str() << "\n";

    const auto emit_layer = [&](std::size_t layer_idx, const RiccatiSolution& sol) {
        // An aborted integration (e.g. finite-time escape) leaves no samples.
        if (sol.p.samples().size() != p.grid.nodes()) return;
        for (std::size_t node = 0; node < p.grid.nodes(); ++node) {
            f << layer_idx << "," << fmt_double(p.grid.node(node));
            const Mat& pm = sol.p.at_node(node);
            const Mat& um = sol.upsilon.at_node(node);
            const Mat& gm = sol.gamma.at_node(node);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j) {
                    f << ",";
                    if (i < pm.rows() && j < pm.cols()) f << fmt_double(pm(i, j));
                }
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j < m; ++j) {
                    f << ",";
                    if (i < um.rows() && j < um.cols()) f << fmt_double(um(i, j));
                }
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j < n; ++j) {
                    f << ",";
                    if (i < gm.rows() && j < gm.cols()) f << fmt_double(gm(i, j));
                }
            f << "\n";
        }
    };

    emit_layer(0, stack.base);
    for (std::size_t k = 0; k < stack.layers.size(); ++k) {
        emit_layer(k + 1, stack.layers[k].riccati);
    }
}

void write_trajectory_csv(const std::string& path, const TimeGrid& grid,
                          const SimulationReport& r) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open " + path + " for writing");
    const Eigen::Index n = r.state_mean.empty() ? 0 : r.state_mean.front().size();
    const Eigen::Index m = r.control_mean.empty() ? 0 : r.control_mean.front().size();

    std::ostringstream header;
    header << "t";
    for (Eigen::Index i = 0; i < n; ++i) header << ",mean_x_" << (i + 1);
    for (Eigen::Index i = 0; i < n; ++i) header << ",var_x_" << (i + 1);
    for (Eigen::Index i = 0; i < m; ++i) header << ",u_" << (i + 1);
    f << header.str() << "\n";

    for (std::size_t node = 0; node < grid.nodes(); ++node) {
        f << fmt_double(grid.node(node));
        for (Eigen::Index i = 0; i < n; ++i) f << "," << fmt_double(r.state_mean[node](i));
        for (Eigen::Index i = 0; i < n; ++i) f << "," << fmt_double(r.state_var[node](i));
        for (Eigen::Index i = 0; i < m; ++i) f << "," << fmt_double(r.control_mean[node](i));
        f << "\n";
    }
}

std::string render_report_text(const RunReport& r) {
    std::ostringstream os;
    os << "verdict: " << verdict_kind(r.verdict);
    if (const auto* irr = std::get_if<IrregularSolvable>(&r.verdict)) {
        os << " (depth " << irr->depth << ", terminal constraint M = "
           << fmt_matrix(irr->terminal_constraint) << ")";
    } else if (const auto* uns = std::get_if<Unsolvable>(&r.verdict)) {
        os << " (at layer " << uns->depth << ")";
    } else if (const auto* inc = std::get_if<Inconclusive>(&r.verdict)) {
        os << " (" << inc->reason << ")";
    }
    os << "\n";
    os << "rtol: " << r.rtol << "  epsilon: " << r.epsilon << "\n";

    if (!r.layer_summaries.empty()) {
        os << "layers:\n";
        for (const LayerSummary& s : r.layer_summaries) {
            os << "  layer " << s.k << ": m_k=" << s.m_k << " upsilon_rank=" << s.upsilon_rank
               << " singular_nodes=" << s.singular_nodes
               << " chosen terminal P_k(T)=" << fmt_matrix(s.chosen_terminal) << "\n";
            for (const SideConditionReport& d : s.diagnostics) {
                if (d.nodes_violated > 0) {
                    os << "    WARN " << to_string(d.condition_id) << " violated at "
                       << d.nodes_violated << " nodes (max " << d.max_violation
                       << "); diagnostic only, see the equilibrium residual\n";
                } else {
                    os << "    ok   " << to_string(d.condition_id) << " (max " << d.max_violation
                       << ")\n";
                }
            }
        }
    }

    const auto branch_line = [&](const char* name, const BranchSummary& b) {
        if (b.available) {
            os << name << ": available, max |gain| = " << b.max_gain_entry
               << ", max |signal| = " << b.max_signal_entry;
            if (b.gramian_condition) {
                os << ", Gramian condition = " << *b.gramian_condition;
            }
            os << "\n";
        } else {
            os << name << ": unavailable";
            if (!b.error.empty()) os << " (" << b.error << ")";
            os << "\n";
        }
    };
    branch_line("closed-loop", r.closed_loop);
    branch_line("open-loop", r.open_loop);

    if (r.simulation) {
        const SimulationReport& s = *r.simulation;
        os << "simulation: paths=" << s.paths << " seed=" << s.seed << "\n";
        os << "  cost = " << s.cost_mean << " +/- " << s.cost_stderr << " (stderr)\n";
        os << "  terminal residual E||Mx(T)||^2 = " << s.terminal_residual << "\n";
        os << "  equilibrium residual max = " << s.mp_residual_max << "\n";
    }
    return os.str();
}

}  // namespace irlq

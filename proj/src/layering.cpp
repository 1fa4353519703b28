#include "irlq/layering.hpp"

#include <numeric>
#include <sstream>

namespace irlq {

namespace {

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

bool all_nodes_range_included(const RiccatiSolution& sol, double rtol) {
    for (std::size_t i = 0; i < sol.upsilon.samples().size(); ++i) {
        if (!range_included(sol.upsilon.at_node(i), sol.gamma.at_node(i), rtol)) {
            return false;
        }
    }
    return true;
}

RowCompression default_compress(const Mat& m, double rtol) { return row_compress(m, rtol); }

}  // namespace

const char* to_string(ConditionId id) {
    switch (id) {
        case ConditionId::Z17: return "Z17";
        case ConditionId::Z3: return "Z3";
        case ConditionId::SEC20: return "SEC20";
        case ConditionId::SEC16: return "SEC16";
        case ConditionId::JNJ5: return "JNJ5";
    }
    return "?";
}

std::string verdict_kind(const Verdict& v) {
    return std::visit(
        [](const auto& kind) -> std::string {
            using T = std::decay_t<decltype(kind)>;
            if constexpr (std::is_same_v<T, Regular>) return "Regular";
            if constexpr (std::is_same_v<T, IrregularSolvable>) return "IrregularSolvable";
            if constexpr (std::is_same_v<T, Unsolvable>) return "Unsolvable";
            if constexpr (std::is_same_v<T, Inconclusive>) return "Inconclusive";
        },
        v);
}

bool classify_base(const RiccatiSolution& sol, double rtol) {
    return all_nodes_range_included(sol, rtol);
}

LayerCoefficients problem_parent_coefficients(const LqProblem& p) {
    LayerCoefficients c;
    c.index = -1;
    const Mat zero_nn = Mat::Zero(p.n, p.n);
    c.a = p.a;
    c.abar = p.abar;
    c.b = p.b;
    c.bbar = p.bbar;
    c.c = MatrixPath::constant(p.grid, Mat::Zero(p.m, p.n));
    c.d = MatrixPath::constant(p.grid, zero_nn);
    c.dbar = MatrixPath::constant(p.grid, zero_nn);
    c.f = MatrixPath::constant(p.grid, zero_nn);
    c.fbar = MatrixPath::constant(p.grid, zero_nn);
    c.h_in = p.b;
    c.hbar_in = p.bbar;
    c.g = MatrixPath::constant(p.grid, Mat::Identity(p.m, p.m));
    c.input_dim = p.m;
    return c;
}

BuiltLayer build_layer(const LayerCoefficients& parent, const RiccatiSolution& sol, double rtol,
                       const CompressFn& compress_in) {
    const CompressFn& compress = compress_in ? compress_in : default_compress;
    const TimeGrid& grid = parent.a.grid();
    const std::size_t nodes = grid.nodes();
    const Eigen::Index n = parent.a.rows();
    const Eigen::Index d_par = parent.input_dim;
    if (sol.upsilon.rows() != d_par) {
        throw DimensionError("build_layer: Upsilon dimension does not match parent input_dim");
    }
    if (!sol.rank_constant()) {
        throw RankProfileError("rank of Upsilon varies across grid nodes");
    }
    const Eigen::Index d_next = d_par - sol.upsilon_rank.front();
    const Mat eye_n = Mat::Identity(n, n);
    const Mat eye_d = Mat::Identity(d_par, d_par);

    BuiltLayer out;
    out.compression.reserve(nodes);
    std::vector<Mat> a_v(nodes), abar_v(nodes), d_v(nodes), dbar_v(nodes), f_v(nodes),
        fbar_v(nodes), b_v(nodes), bbar_v(nodes), c_v(nodes), h_v(nodes), hbar_v(nodes),
        g_v(nodes);

    for (std::size_t i = 0; i < nodes; ++i) {
        const Mat& p = sol.p.at_node(i);
        const Mat& ups = sol.upsilon.at_node(i);
        const Mat& gam = sol.gamma.at_node(i);
        const Mat ups_pinv = pinv(ups, rtol);
        const Mat proj = eye_d - ups_pinv * ups;  // I - Upsilon^+ Upsilon
        RowCompression rc = compress(proj, rtol);
        if (rc.bottom_block.rows() != d_next) {
            throw RankProfileError("compression rank disagrees with the Upsilon rank profile");
        }

        const Mat j = pinv(eye_n - p * parent.fbar.at_node(i), rtol);
        const Mat jp = j * p;  // (I - P Fbar)^+ P
        const Mat drift_bar = parent.abar.at_node(i) + parent.dbar.at_node(i) * p;
        const Mat m_drift = parent.a.at_node(i) + parent.d.at_node(i).transpose() * p +
                            parent.f.at_node(i) * jp * drift_bar;
        const Mat m_diff = drift_bar + parent.fbar.at_node(i) * jp * drift_bar;
        const Mat ht = parent.b.at_node(i).transpose() +
                       parent.bbar.at_node(i).transpose() * jp * parent.dbar.at_node(i);
        const Mat hbt = parent.bbar.at_node(i).transpose() * j;
        const Mat h = ht.transpose();
        const Mat hb = hbt.transpose();
        const Mat feedback = ups_pinv * gam;

        a_v[i] = m_drift - h * feedback;
        abar_v[i] = m_diff - hb * feedback;
        d_v[i] = parent.d.at_node(i) + parent.f.at_node(i) * jp * parent.dbar.at_node(i) -
                 h * ups_pinv * ht;
        dbar_v[i] = parent.dbar.at_node(i) + parent.fbar.at_node(i) * jp * parent.dbar.at_node(i) -
                    hb * ups_pinv * ht;
        f_v[i] = parent.f.at_node(i) * j - h * ups_pinv * hbt;
        fbar_v[i] = parent.fbar.at_node(i) * j - hb * ups_pinv * hbt;

        // Starred-block extraction: the free directions of the control enter
        // through the last d_next columns after the compression change of basis.
        const Mat basis = proj * rc.inverse_transform;
        b_v[i] = (h * basis).rightCols(d_next);
        bbar_v[i] = (hb * basis).rightCols(d_next);
        c_v[i] = Mat((gam.transpose() * basis).rightCols(d_next).transpose());
        g_v[i] = rc.inverse_transform.rightCols(d_next);
        h_v[i] = h;
        hbar_v[i] = hb;
        out.compression.push_back(std::move(rc));
    }

    LayerCoefficients& c = out.coeffs;
    c.index = parent.index + 1;
    c.a = MatrixPath(grid, std::move(a_v));
    c.abar = MatrixPath(grid, std::move(abar_v));
    c.d = MatrixPath(grid, std::move(d_v));
    c.dbar = MatrixPath(grid, std::move(dbar_v));
    c.f = MatrixPath(grid, std::move(f_v));
    c.fbar = MatrixPath(grid, std::move(fbar_v));
    c.b = MatrixPath(grid, std::move(b_v));
    c.bbar = MatrixPath(grid, std::move(bbar_v));
    c.c = MatrixPath(grid, std::move(c_v));
    c.h_in = MatrixPath(grid, std::move(h_v));
    c.hbar_in = MatrixPath(grid, std::move(hbar_v));
    c.g = MatrixPath(grid, std::move(g_v));
    c.input_dim = d_next;
    return out;
}

namespace {

// I - (I - P_k Fbar_{k-1})^+ (I - P_k Fbar_{k-1}) at one node.
Mat free_projector(const Mat& p, const Mat& fbar, double rtol) {
    const Mat pencil = Mat::Identity(p.rows(), p.cols()) - p * fbar;
    return Mat::Identity(p.rows(), p.cols()) - pinv(pencil, rtol) * pencil;
}

SideConditionReport measure_condition(ConditionId id, const std::vector<Mat>& lhs_nodes,
                                      const std::vector<double>& scales) {
    SideConditionReport rep;
    rep.condition_id = id;
    for (std::size_t i = 0; i < lhs_nodes.size(); ++i) {
        const double viol = lhs_nodes[i].norm();
        rep.max_violation = std::max(rep.max_violation, viol);
        if (viol > 1e-8 * (1.0 + scales[i])) {
            ++rep.nodes_violated;
        }
    }
    return rep;
}

}  // namespace

std::vector<SideConditionReport> check_side_conditions(const MatrixPath& problem_bbar,
                                                       const std::vector<LayerRecord>& layers,
                                                       std::size_t k, double rtol) {
    std::vector<SideConditionReport> out;
    if (k == 0 || k > layers.size()) {
        return out;
    }
    const LayerRecord& rec = layers[k - 1];
    const std::size_t nodes = rec.riccati.p.samples().size();

    // proj_k(t) = I - (I - P_k Fbar_{k-1})^+ (I - P_k Fbar_{k-1})
    std::vector<Mat> proj(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        proj[i] = free_projector(rec.riccati.p.at_node(i), rec.coeffs.fbar.at_node(i), rtol);
    }

    const auto left_times_proj = [&](const std::function<Mat(std::size_t)>& left, ConditionId id) {
        std::vector<Mat> lhs(nodes);
        std::vector<double> scales(nodes);
        for (std::size_t i = 0; i < nodes; ++i) {
            const Mat l = left(i);
            lhs[i] = l * proj[i];
            scales[i] = l.norm();
        }
        return measure_condition(id, lhs, scales);
    };

    if (k == 1) {
        out.push_back(left_times_proj(
            [&](std::size_t i) { return Mat(problem_bbar.at_node(i).transpose()); },
            ConditionId::Z17));
        out.push_back(left_times_proj(
            [&](std::size_t i) { return Mat(rec.coeffs.abar.at_node(i).transpose()); },
            ConditionId::Z3));
        return out;
    }

    // Deeper layers: the leading factor threads through every (I - P_j Fbar_{j-1})^+.
    const auto pencil_pinv = [&](std::size_t layer_idx, std::size_t i) {
        const LayerRecord& r = layers[layer_idx];
        const Mat& p = r.riccati.p.at_node(i);
        return pinv(Mat::Identity(p.rows(), p.cols()) - p * r.coeffs.fbar.at_node(i), rtol);
    };

    out.push_back(left_times_proj(
        [&](std::size_t i) {
            Mat l = problem_bbar.at_node(i).transpose();
            for (std::size_t j = 0; j + 1 < k; ++j) {
                l = l * pencil_pinv(j, i);
            }
            return l;
        },
        ConditionId::SEC20));
    out.push_back(left_times_proj(
        [&](std::size_t i) { return Mat(rec.coeffs.abar.at_node(i).transpose()); },
        ConditionId::SEC16));

    // JNJ5 for each L in {Bbar_{k-2}, Dbar_{k-2}, Fbar_{k-2}}: take the worst.
    const LayerRecord& prev = layers[k - 2];
    SideConditionReport jnj;
    jnj.condition_id = ConditionId::JNJ5;
    for (const MatrixPath* lsrc : {&prev.coeffs.bbar, &prev.coeffs.dbar, &prev.coeffs.fbar}) {
        const SideConditionReport r = left_times_proj(
            [&](std::size_t i) {
                return Mat(lsrc->at_node(i).transpose() * pencil_pinv(k - 2, i));
            },
            ConditionId::JNJ5);
        jnj.max_violation = std::max(jnj.max_violation, r.max_violation);
        jnj.nodes_violated = std::max(jnj.nodes_violated, r.nodes_violated);
    }
    out.push_back(jnj);
    return out;
}

void continue_reduction(LayerStack& stack, BuiltLayer layer, const Mat& h,
                        const MatrixPath& problem_bbar, const TerminalPolicy& policy,
                        const CompressFn& compress) {
    const Eigen::Index n = layer.coeffs.a.rows();
    Mat chosen_sum = Mat::Zero(n, n);
    for (const LayerRecord& rec : stack.layers) {
        chosen_sum += rec.chosen_terminal;
    }

    while (true) {
        const std::size_t k = stack.layers.size() + 1;
        if (layer.coeffs.input_dim == 0) {
            stack.verdict = Unsolvable{k};
            return;
        }
        if (k > 64) {
            stack.verdict = Inconclusive{"reduction depth exceeded the safety bound"};
            return;
        }

        std::vector<Mat> candidates;
        if (policy.use_defaults) {
            candidates.push_back(Mat::Zero(n, n));
            Mat def = -(chosen_sum + h);
            if (def.cwiseAbs().maxCoeff() > 0.0) {
                candidates.push_back(symmetrize(def));
            }
        }
        for (const Mat& u : policy.user_candidates) {
            candidates.push_back(symmetrize(u));
        }
        if (candidates.empty()) {
            stack.verdict = Inconclusive{"no terminal candidates to try"};
            return;
        }

        struct Attempt {
            Mat cand;
            std::optional<RiccatiSolution> sol;
            bool blowup = false;
            bool rank_ok = false;
            bool included = false;
        };
        std::vector<Attempt> attempts;
        std::optional<std::size_t> exit_idx, descend_idx;
        for (std::size_t idx = 0; idx < candidates.size(); ++idx) {
            Attempt at;
            at.cand = candidates[idx];
            try {
                at.sol = integrate_layer(layer.coeffs, at.cand, stack.rtol);
            } catch (const RiccatiBlowup&) {
                at.blowup = true;
                attempts.push_back(std::move(at));
                continue;
            }
            at.rank_ok = at.sol->rank_constant();
            if (at.rank_ok) {
                at.included = all_nodes_range_included(*at.sol, stack.rtol);
            }
            const bool included = at.included;
            const bool can_descend = at.rank_ok && at.sol->rank_at_front() >= 1;
            attempts.push_back(std::move(at));
            if (included) {
                exit_idx = idx;
                break;  // first candidate passing the range test wins
            }
            if (!descend_idx && can_descend) {
                descend_idx = idx;
            }
        }

        const auto push_record = [&](std::size_t idx) -> LayerRecord& {
            LayerRecord rec;
            rec.coeffs = layer.coeffs;
            rec.compression = layer.compression;
            rec.riccati = *attempts[idx].sol;
            rec.m_k = layer.coeffs.input_dim;
            rec.chosen_terminal = attempts[idx].cand;
            stack.layers.push_back(std::move(rec));
            stack.layers.back().diagnostics =
                check_side_conditions(problem_bbar, stack.layers, k, stack.rtol);
            return stack.layers.back();
        };

        if (exit_idx) {
            LayerRecord& rec = push_record(*exit_idx);
            chosen_sum += rec.chosen_terminal;
            try {
                stack.exit_coeffs = build_layer(rec.coeffs, rec.riccati, stack.rtol, compress).coeffs;
            } catch (const RankProfileError& e) {
                stack.verdict = Inconclusive{e.what()};
                return;
            }
            stack.verdict = IrregularSolvable{k, chosen_sum};
            return;
        }
        if (descend_idx) {
            LayerRecord& rec = push_record(*descend_idx);
            chosen_sum += rec.chosen_terminal;
            try {
                layer = build_layer(rec.coeffs, rec.riccati, stack.rtol, compress);
            } catch (const RankProfileError& e) {
                stack.verdict = Inconclusive{e.what()};
                return;
            }
            continue;
        }

        // No exit, no descend: either every candidate certifies unsolvability
        // (Upsilon_k == 0 while the range condition fails, hence Gamma_k != 0),
        // or some candidates never produced a usable solution.
        bool all_blowup = true;
        bool all_completed_rank0 = true;
        for (const Attempt& at : attempts) {
            all_blowup = all_blowup && at.blowup;
            all_completed_rank0 =
                all_completed_rank0 && at.rank_ok && at.sol && at.sol->rank_at_front() == 0;
        }
        for (std::size_t idx = 0; idx < attempts.size(); ++idx) {
            if (attempts[idx].sol && attempts[idx].rank_ok) {
                push_record(idx);
                break;
            }
        }
        if (all_blowup) {
            std::ostringstream os;
            os << "every terminal candidate at layer " << k << " blew up";
            stack.verdict = Inconclusive{os.str()};
        } else if (all_completed_rank0) {
            stack.verdict = Unsolvable{k};
        } else {
            std::ostringstream os;
            os << "layer " << k
               << ": no candidate passed the range test, descent impossible, and at least one "
                  "candidate blew up or changed rank";
            stack.verdict = Inconclusive{os.str()};
        }
        return;
    }
}

LayerStack reduce(const LqProblem& p, const TerminalPolicy& policy) {
    LayerStack stack;
    stack.rtol = p.solver.rtol;
    try {
        stack.base = integrate_base(p);
    } catch (const RiccatiBlowup& b) {
        std::ostringstream os;
        os << "base Riccati equation blew up at t=" << b.time
           << "; the problem is not finite on the full horizon";
        stack.verdict = Inconclusive{os.str()};
        return stack;
    }
    if (classify_base(stack.base, stack.rtol)) {
        stack.verdict = Regular{};
        return stack;
    }
    if (!stack.base.rank_constant()) {
        stack.verdict = Inconclusive{"rank of Upsilon_0 varies across grid nodes"};
        return stack;
    }
    BuiltLayer first;
    try {
        first = build_layer(problem_parent_coefficients(p), stack.base, stack.rtol);
    } catch (const RankProfileError& e) {
        stack.verdict = Inconclusive{e.what()};
        return stack;
    }
    continue_reduction(stack, std::move(first), p.h, p.bbar, policy);
    return stack;
}

LayerStack reduce(const LqProblem& p) {
    TerminalPolicy policy;
    policy.user_candidates = p.solver.terminal_candidates;
    return reduce(p, policy);
}

ReducedSystem reduced_exit_system(const LayerStack& stack) {
    const auto* solvable = std::get_if<IrregularSolvable>(&stack.verdict);
    if (solvable == nullptr || !stack.exit_coeffs) {
        throw NotSolvableError("reduced_exit_system requires an IrregularSolvable verdict");
    }
    ReducedSystem sys;
    sys.ahat = stack.exit_coeffs->a;
    sys.bhat = stack.exit_coeffs->b;
    sys.atilde = stack.exit_coeffs->abar;
    sys.btilde = stack.exit_coeffs->bbar;
    sys.constraint = solvable->terminal_constraint;
    return sys;
}

ControllerSpec reconstruct_controller(const LayerStack& stack, SteerMode mode,
                                      const std::optional<SteeringResult>& steering) {
    const double rtol = stack.rtol;
    ControllerSpec ctrl;
    ctrl.mode = mode;
    ctrl.steering = steering;

    if (std::holds_alternative<Regular>(stack.verdict)) {
        const TimeGrid& grid = stack.base.p.grid();
        const std::size_t nodes = grid.nodes();
        const Eigen::Index n = stack.base.p.rows();
        const Eigen::Index m = stack.base.upsilon.rows();
        std::vector<Mat> gain(nodes), sig(nodes);
        for (std::size_t i = 0; i < nodes; ++i) {
            gain[i] = -pinv(stack.base.upsilon.at_node(i), rtol) * stack.base.gamma.at_node(i);
            sig[i] = Mat::Zero(m, 1);
        }
        ctrl.gain = MatrixPath(grid, std::move(gain));
        ctrl.signal = MatrixPath(grid, std::move(sig));
        ctrl.upsilon0 = stack.base.upsilon;
        ctrl.eq_gain = stack.base.gamma;
        ctrl.eq_const = MatrixPath::constant(grid, Mat::Zero(m, 1));
        ctrl.terminal_constraint = Mat::Zero(n, n);
        return ctrl;
    }

    const auto* solvable = std::get_if<IrregularSolvable>(&stack.verdict);
    if (solvable == nullptr) {
        throw NotSolvableError("reconstruct_controller requires a solvable verdict, got " +
                               verdict_kind(stack.verdict));
    }
    if (!stack.exit_coeffs || stack.layers.empty()) {
        throw NotSolvableError("reconstruct_controller: incomplete layer stack");
    }

    const TimeGrid& grid = stack.base.p.grid();
    const std::size_t nodes = grid.nodes();
    const Eigen::Index n = stack.base.p.rows();
    const Eigen::Index m = stack.base.upsilon.rows();
    const std::size_t k = stack.layers.size();
    const Eigen::Index d_exit = stack.exit_coeffs->input_dim;

    std::vector<Mat> gain(nodes), sig(nodes), eq_gain(nodes), eq_const(nodes);
    const Mat eye_n = Mat::Identity(n, n);

    for (std::size_t i = 0; i < nodes; ++i) {
        Mat free_gain = Mat::Zero(d_exit, n);
        Mat free_signal = Mat::Zero(d_exit, 1);
        if (steering) {
            free_gain = steering->free_gain.at_node(i);
            free_signal = steering->free_signal.at_node(i);
        }

        // Innermost law at the exit layer.
        const RiccatiSolution& exit_sol = stack.layers[k - 1].riccati;
        const Mat& g_exit = stack.exit_coeffs->g.at_node(i);
        Mat kx = -pinv(exit_sol.upsilon.at_node(i), rtol) * exit_sol.gamma.at_node(i) +
                 g_exit * free_gain;
        Mat gx = g_exit * free_signal;

        Mat s = Mat::Zero(n, n);   // sum of P_j above the current level
        Mat w_gain = Mat::Zero(n, n);
        Mat w_const = Mat::Zero(n, 1);
        for (std::size_t level = k; level-- > 0;) {
            const LayerCoefficients& co = stack.layers[level].coeffs;
            const Mat& p_next = stack.layers[level].riccati.p.at_node(i);
            s += p_next;
            const Mat jp = pinv(eye_n - p_next * co.fbar.at_node(i), rtol);
            w_gain = jp * (w_gain + p_next * (co.abar.at_node(i) + co.dbar.at_node(i) * s +
                                              co.bbar.at_node(i) * kx));
            w_const = jp * (w_const + p_next * co.bbar.at_node(i) * gx);

            const RiccatiSolution& lvl_sol =
                level == 0 ? stack.base : stack.layers[level - 1].riccati;
            const Mat ups_pinv = pinv(lvl_sol.upsilon.at_node(i), rtol);
            const Mat ht = co.h_in.at_node(i).transpose();
            const Mat hbt = co.hbar_in.at_node(i).transpose();
            kx = -ups_pinv * (lvl_sol.gamma.at_node(i) + ht * s + hbt * w_gain) +
                 co.g.at_node(i) * kx;
            gx = -ups_pinv * (hbt * w_const) + co.g.at_node(i) * gx;
        }

        gain[i] = kx;
        sig[i] = gx;
        const Mat& b_t = stack.layers[0].coeffs.h_in.at_node(i);      // H_0 = B
        const Mat& bbar_t = stack.layers[0].coeffs.hbar_in.at_node(i);  // Hbar_0 = Bbar
        eq_gain[i] = stack.base.gamma.at_node(i) + b_t.transpose() * s + bbar_t.transpose() * w_gain;
        eq_const[i] = bbar_t.transpose() * w_const;
    }

    ctrl.gain = MatrixPath(grid, std::move(gain));
    ctrl.signal = MatrixPath(grid, std::move(sig));
    ctrl.upsilon0 = stack.base.upsilon;
    ctrl.eq_gain = MatrixPath(grid, std::move(eq_gain));
    ctrl.eq_const = MatrixPath(grid, std::move(eq_const));
    ctrl.terminal_constraint = solvable->terminal_constraint;
    (void)m;
    return ctrl;
}

}  // namespace irlq

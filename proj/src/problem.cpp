#include "irlq/problem.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace irlq {

using nlohmann::json;

MatrixPath::MatrixPath(TimeGrid grid, std::vector<Mat> samples)
    : grid_(grid), samples_(std::move(samples)) {
    if (samples_.size() != grid_.nodes()) {
        throw ValidationError("MatrixPath: sample count must equal steps+1");
    }
    for (const Mat& s : samples_) {
        if (s.rows() != samples_.front().rows() || s.cols() != samples_.front().cols()) {
            throw ValidationError("MatrixPath: samples must share dimensions");
        }
        require_finite(s, "MatrixPath");
    }
}

MatrixPath MatrixPath::constant(const TimeGrid& grid, const Mat& value) {
    return MatrixPath(grid, std::vector<Mat>(grid.nodes(), value));
}

Mat MatrixPath::eval(double t) const {
    const double span = grid_.tT - grid_.t0;
    if (t < grid_.t0 - 1e-12 * span || t > grid_.tT + 1e-12 * span) {
        throw RangeError("MatrixPath::eval: t outside grid");
    }
    const double s = (t - grid_.t0) / grid_.dt();
    const auto nearest = static_cast<std::size_t>(
        std::clamp<long long>(std::llround(s), 0, static_cast<long long>(grid_.steps)));
    if (std::abs(s - static_cast<double>(nearest)) < 1e-9) {
        return samples_[nearest];  // stored sample, bit-exact at nodes
    }
    const auto lo = static_cast<std::size_t>(std::clamp<long long>(
        static_cast<long long>(std::floor(s)), 0, static_cast<long long>(grid_.steps) - 1));
    const double w = s - static_cast<double>(lo);
    return (1.0 - w) * samples_[lo] + w * samples_[lo + 1];
}

bool MatrixPath::is_constant() const {
    for (std::size_t i = 1; i < samples_.size(); ++i) {
        if (samples_[i] != samples_.front()) {
            return false;
        }
    }
    return true;
}

namespace {

void check_dims(const MatrixPath& p, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (p.rows() != rows || p.cols() != cols) {
        std::ostringstream os;
        os << "field " << name << ": expected " << rows << "x" << cols << ", got " << p.rows()
           << "x" << p.cols();
        throw ValidationError(os.str());
    }
}

// Symmetrize when asymmetry is within tolerance; reject beyond.
Mat symmetrized(const Mat& m, const char* name) {
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8) {
        std::ostringstream os;
        os << "field " << name << ": asymmetric beyond tolerance (max deviation " << asym << ")";
        throw ValidationError(os.str());
    }
    return 0.5 * (m + m.transpose());
}

MatrixPath symmetrized_path(const MatrixPath& p, const char* name) {
    std::vector<Mat> out;
    out.reserve(p.samples().size());
    for (const Mat& s : p.samples()) {
        out.push_back(symmetrized(s, name));
    }
    return MatrixPath(p.grid(), std::move(out));
}

Mat parse_matrix(const json& j, const char* name) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw ParseError(std::string("field ") + name + ": expected a 2-D array");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ParseError(std::string("field ") + name + ": ragged rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            const json& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) {
                throw ParseError(std::string("field ") + name + ": non-numeric entry");
            }
            m(r, c) = v.get<double>();
        }
    }
    return m;
}

MatrixPath parse_path(const json& j, const TimeGrid& grid, const char* name) {
    if (j.contains("constant")) {
        return MatrixPath::constant(grid, parse_matrix(j["constant"], name));
    }
    if (j.contains("samples")) {
        const json& arr = j["samples"];
        if (!arr.is_array() || arr.size() != grid.nodes()) {
            std::ostringstream os;
            os << "field " << name << ": samples length must be steps+1 (" << grid.nodes() << ")";
            throw ParseError(os.str());
        }
        std::vector<Mat> samples;
        samples.reserve(arr.size());
        for (const json& s : arr) {
            samples.push_back(parse_matrix(s, name));
        }
        return MatrixPath(grid, std::move(samples));
    }
    throw ParseError(std::string("field ") + name + ": expected 'constant' or 'samples'");
}

json matrix_to_json(const Mat& m) {
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

json path_to_json(const MatrixPath& p) {
    if (p.is_constant()) {
        return json{{"constant", matrix_to_json(p.at_node(0))}};
    }
    json samples = json::array();
    for (const Mat& s : p.samples()) {
        samples.push_back(matrix_to_json(s));
    }
    return json{{"samples", std::move(samples)}};
}

template <typename T>
T require_field(const json& j, const char* name) {
    if (!j.contains(name)) {
        throw ParseError(std::string("missing field ") + name);
    }
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw ParseError(std::string("field ") + name + ": wrong type");
    }
}

}  // namespace

void LqProblem::validate_and_normalize() {
    if (n <= 0 || m <= 0) {
        throw ValidationError("state and input dimensions must be positive");
    }
    if (grid.steps < 2) {
        throw ValidationError("grid must have at least 2 steps");
    }
    if (!(grid.tT > grid.t0)) {
        throw ValidationError("horizon must satisfy T > t0");
    }
    check_dims(a, n, n, "A");
    check_dims(b, n, m, "B");
    check_dims(abar, n, n, "Abar");
    check_dims(bbar, n, m, "Bbar");
    check_dims(q, n, n, "Q");
    check_dims(r, m, m, "R");
    if (h.rows() != n || h.cols() != n) {
        throw ValidationError("field H: wrong dimensions");
    }
    if (x0.size() != n) {
        throw ValidationError("field x0: wrong length");
    }
    require_finite(h, "H");
    if (!x0.allFinite()) {
        throw ValidationError("field x0: non-finite entries");
    }
    q = symmetrized_path(q, "Q");
    r = symmetrized_path(r, "R");
    h = symmetrized(h, "H");
    for (const Mat& cand : solver.terminal_candidates) {
        if (cand.rows() != n || cand.cols() != n) {
            throw ValidationError("terminal_candidates: wrong dimensions");
        }
        require_finite(cand, "terminal_candidates");
    }
    if (!(solver.rtol > 0.0)) {
        throw ValidationError("solver.rtol must be positive");
    }
    if (solver.epsilon_clamp && !(*solver.epsilon_clamp > 0.0 &&
                                  *solver.epsilon_clamp < grid.tT - grid.t0)) {
        throw ValidationError("solver.epsilon_clamp must lie in (0, T - t0)");
    }
}

LqProblem load_problem(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("problem file: ") + e.what());
    }

    LqProblem p;
    p.n = require_field<Eigen::Index>(j, "n");
    p.m = require_field<Eigen::Index>(j, "m");
    p.grid.t0 = require_field<double>(j, "t0");
    p.grid.tT = require_field<double>(j, "T");
    p.grid.steps = require_field<std::size_t>(j, "steps");

    const auto x0v = require_field<std::vector<double>>(j, "x0");
    p.x0 = Eigen::Map<const Vec>(x0v.data(), static_cast<Eigen::Index>(x0v.size()));

    const auto field = [&](const char* name) -> const json& {
        if (!j.contains(name)) {
            throw ParseError(std::string("missing field ") + name);
        }
        return j.at(name);
    };
    p.a = parse_path(field("A"), p.grid, "A");
    p.b = parse_path(field("B"), p.grid, "B");
    p.abar = parse_path(field("Abar"), p.grid, "Abar");
    p.bbar = parse_path(field("Bbar"), p.grid, "Bbar");
    p.q = parse_path(field("Q"), p.grid, "Q");
    p.r = parse_path(field("R"), p.grid, "R");
    p.h = parse_matrix(field("H"), "H");

    if (j.contains("solver")) {
        const json& s = j.at("solver");
        if (s.contains("rtol")) {
            p.solver.rtol = s.at("rtol").get<double>();
        }
        if (s.contains("mc_paths")) {
            p.solver.mc_paths = s.at("mc_paths").get<std::size_t>();
        }
        if (s.contains("seed")) {
            p.solver.seed = s.at("seed").get<std::uint64_t>();
        }
        if (s.contains("epsilon_clamp")) {
            p.solver.epsilon_clamp = s.at("epsilon_clamp").get<double>();
        }
        if (s.contains("terminal_candidates")) {
            for (const json& cand : s.at("terminal_candidates")) {
                p.solver.terminal_candidates.push_back(parse_matrix(cand, "terminal_candidates"));
            }
        }
    }

    p.validate_and_normalize();
    return p;
}

LqProblem load_problem_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open problem file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_problem(buf.str());
}

std::string serialize_problem(const LqProblem& p) {
    json j;
    j["n"] = p.n;
    j["m"] = p.m;
    j["t0"] = p.grid.t0;
    j["T"] = p.grid.tT;
    j["steps"] = p.grid.steps;
    j["x0"] = std::vector<double>(p.x0.data(), p.x0.data() + p.x0.size());
    j["A"] = path_to_json(p.a);
    j["B"] = path_to_json(p.b);
    j["Abar"] = path_to_json(p.abar);
    j["Bbar"] = path_to_json(p.bbar);
    j["Q"] = path_to_json(p.q);
    j["R"] = path_to_json(p.r);
    j["H"] = matrix_to_json(p.h);

    json s;
    s["rtol"] = p.solver.rtol;
    s["mc_paths"] = p.solver.mc_paths;
    s["seed"] = p.solver.seed;
    if (p.solver.epsilon_clamp) {
        s["epsilon_clamp"] = *p.solver.epsilon_clamp;
    }
    if (!p.solver.terminal_candidates.empty()) {
        json cands = json::array();
        for (const Mat& c : p.solver.terminal_candidates) {
            cands.push_back(matrix_to_json(c));
        }
        s["terminal_candidates"] = std::move(cands);
    }
    j["solver"] = std::move(s);
    return j.dump(2);
}

}  // namespace irlq

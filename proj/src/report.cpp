#include "oswitch/report.hpp"

#include "oswitch/bsde_dp.hpp"
#include "oswitch/errors.hpp"
#include "oswitch/qvi_elliptic.hpp"
#include "oswitch/reflection.hpp"
#include "oswitch/switching.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <limits>
#include <map>

namespace oswitch {

using nlohmann::json;

std::string csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string render_csv(const CsvTable& table) {
    auto field = [](const std::string& s) {
        if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
        std::string out = "\"";
        for (char c : s) {
            if (c == '"') out += '"';
            out += c;
        }
        return out + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += field(cells[i]);
        }
        out += "\r\n";
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
    return out;
}

bool RunReport::pass() const {
    return std::all_of(invariants.begin(), invariants.end(), [](const auto& c) { return c.pass; });
}

json RunReport::to_json(const InstanceFile& inst, const RunFlags& flags) const {
    json doc;
    doc["command"] = command;
    doc["instance"] = {{"source", inst.source}, {"digest", inst.digest}};
    doc["seed"] = flags.seed.value_or(inst.run.seed);
    if (flags.timestamps) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::tm tm{};
        gmtime_r(&now, &tm);
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        doc["timestamp"] = buf;
    }
    doc["results"] = results;
    json inv = json::array();
    for (const auto& c : invariants)
        inv.push_back({{"name", c.name}, {"value", c.value}, {"relation", c.relation}, {"threshold", c.threshold},
                       {"pass", c.pass}});
    doc["invariants"] = inv;
    doc["pass"] = pass();
    return doc;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"solve-qvi", "solve-penalized", "solve-oblique", "switching-value",
                                                "oracle",    "simulate",        "feynman-kac",   "report-all"};
    return names;
}

namespace {

double path_scale(const PathEnvelope& env) {
    double a = 0.0, b = 0.0;
    for (const auto& f : env.upper) a = std::max(a, f.cwiseAbs().maxCoeff());
    for (const auto& f : env.lower) b = std::max(b, f.cwiseAbs().maxCoeff());
    return a + b;
}

json field_json(const ModeField& f) {
    json out = json::array();
    for (Index j = 0; j < f.rows(); ++j) {
        json row = json::array();
        for (Index x = 0; x < f.cols(); ++x) row.push_back(f(j, x));
        out.push_back(row);
    }
    return out;
}

struct Context {
    const InstanceFile& inst;
    std::uint64_t seed;
    RunReport& report;
    std::string prefix;  // invariant / result namespace inside report-all

    void check_le(const std::string& name, double value, double threshold) {
        report.invariants.push_back({prefix + name, value, threshold, "<=", value <= threshold});
    }
    void check_ge(const std::string& name, double value, double threshold) {
        report.invariants.push_back({prefix + name, value, threshold, ">=", value >= threshold});
    }
    json& results(const std::string& key) { return report.results[key]; }

    const TimeGrid& grid() const {
        require(inst.grid.has_value(), ErrorKind::InvalidArgument, "this command needs a grid section");
        return *inst.grid;
    }
    PicardOptions picard() const {
        PicardOptions o;
        o.tol = inst.run.tol;
        o.max_sweeps = inst.run.max_sweeps;
        o.gauss_seidel = inst.run.gauss_seidel;
        return o;
    }
    QviOptions qvi() const {
        QviOptions o;
        o.tol = inst.run.tol;
        o.max_sweeps = inst.run.max_sweeps;
        return o;
    }
};

Vector switching_terminal(const DriverSystem& drv) {
    const ModeField& xi = drv.xi();
    for (Index j = 1; j < xi.rows(); ++j)
        if (xi.row(j) != xi.row(0))
            fail(ErrorKind::UnsupportedTerminal, "switching needs the same terminal vector in every mode");
    return xi.row(0).transpose();
}

bool decoupled_cost_form(const InstanceFile& inst) {
    return inst.drv().kind() == DriverKind::Decoupled && inst.bar().form() == BarrierForm::Cost;
}

void cmd_solve_qvi(Context& c) {
    const auto& gen = c.inst.gen();
    const auto& drv = c.inst.drv();
    const auto& bar = c.inst.bar();
    const Envelope env = build_envelope(gen, drv, bar);
    const QviSolution q = solve_qvi_policy_iteration(gen, drv, bar, env, PolicyStart::Lower, c.qvi());
    json& r = c.results("solve-qvi");
    r["u"] = field_json(q.u);
    r["nu"] = field_json(q.nu);
    json active = json::array();
    for (Index j = 0; j < q.u.rows(); ++j) {
        json row = json::array();
        for (Index x = 0; x < q.u.cols(); ++x) row.push_back(q.active(j, x));
        active.push_back(row);
    }
    r["active"] = active;
    r["policy_iterations"] = q.iterations;
    r["scale"] = q.scale;
    r["envelope"] = {{"lower", field_json(env.lower)}, {"upper", field_json(env.upper)}};
    r["residuals"] = {{"row", q.row_residual}, {"complementarity", q.complementarity},
                      {"domination", q.domination}, {"raw_nu_min", q.raw_nu_min}};

    c.check_le("qvi.row_residual", q.row_residual, 1e-9 * q.scale);
    c.check_le("qvi.domination", q.domination, 1e-9);
    c.check_le("qvi.complementarity", q.complementarity, 1e-8 * q.scale);
    c.check_ge("qvi.nu_before_clipping", q.raw_nu_min, -1e-12);
    if (decoupled_cost_form(c.inst)) {
        const QviSolution up = solve_qvi_policy_iteration(gen, drv, bar, env, PolicyStart::Upper, c.qvi());
        c.check_le("qvi.uniqueness_probe", (up.u - q.u).cwiseAbs().maxCoeff(), 1e-8);
    }
    const TvBound tv = tv_bound_check(gen, q, drv, env);
    r["tv_bound"] = {{"applicable", tv.applicable}, {"nu_tv", tv.lhs}, {"bound", tv.rhs}};
    if (tv.applicable) c.check_le("qvi.tv_bound", tv.lhs, tv.rhs);

    CsvTable t{"qvi.csv", {"mode", "state", "u", "nu", "active"}, {}};
    for (Index j = 0; j < q.u.rows(); ++j)
        for (Index x = 0; x < q.u.cols(); ++x)
            t.rows.push_back({std::to_string(j + 1), std::to_string(x), csv_number(q.u(j, x)), csv_number(q.nu(j, x)),
                              q.active(j, x) ? "1" : "0"});
    c.report.tables.push_back(std::move(t));
    c.report.exports.push_back({"qvi_solution.json", r});
}

void cmd_solve_penalized(Context& c) {
    const auto& gen = c.inst.gen();
    const auto& drv = c.inst.drv();
    const auto& bar = c.inst.bar();
    const auto& levels = c.inst.run.penalty_levels;
    CsvTable t{"penalization.csv", {"problem", "level", "sup_gap", "complementarity", "sweeps"}, {}};
    json& r = c.results("solve-penalized");

    const Envelope env = build_envelope(gen, drv, bar);
    const QviSolution q = solve_qvi_policy_iteration(gen, drv, bar, env, PolicyStart::Lower, c.qvi());
    const auto pen = solve_qvi_penalized(gen, drv, bar, env, levels, c.qvi());
    json rows = json::array();
    double prev_gap = std::numeric_limits<double>::infinity();
    double worst_excess = -std::numeric_limits<double>::infinity();
    double gap_growth = 0.0;
    for (const auto& p : pen) {
        const double gap = (q.u - p.u).cwiseAbs().maxCoeff();
        worst_excess = std::max(worst_excess, (p.u - q.u).maxCoeff());
        gap_growth = std::max(gap_growth, gap - prev_gap);
        prev_gap = gap;
        rows.push_back({{"level", p.level}, {"u", field_json(p.u)}, {"sup_gap", gap}, {"sweeps", p.sweeps}});
        t.rows.push_back({"elliptic", csv_number(p.level), csv_number(gap), "", std::to_string(p.sweeps)});
    }
    r["elliptic"] = rows;
    r["elliptic_reference"] = field_json(q.u);
    c.check_le("penalized.elliptic_below_limit", worst_excess, 1e-9 * q.scale);
    c.check_le("penalized.elliptic_gap_nonincreasing", gap_growth, 1e-9 * q.scale);

    if (c.inst.grid) {
        const TimeGrid& grid = *c.inst.grid;
        const PathEnvelope penv = build_path_envelope(gen, grid, drv, bar);
        const double scale = std::max(1.0, path_scale(penv));
        const ReflectedSolution it = solve_oblique_iterative(gen, grid, drv, bar, penv, c.picard());
        const auto fin = solve_oblique_penalized(gen, grid, drv, bar, penv, levels, c.picard());
        json frows = json::array();
        double excess = -std::numeric_limits<double>::infinity();
        double mart = 0.0;
        for (const auto& s : fin) {
            const double gap = sup_distance(s.Y, it.Y);
            for (std::size_t k = 0; k < s.Y.size(); ++k) excess = std::max(excess, (s.Y[k] - it.Y[k]).maxCoeff());
            const double comp = complementarity_residual(s, bar);
            mart = std::max(mart, martingale_check(s, gen));
            frows.push_back({{"level", s.penalty_level}, {"sup_gap", gap}, {"complementarity", comp},
                             {"sweeps", s.meta.sweeps}, {"Y0", field_json(s.Y.front())}});
            t.rows.push_back({"finite-horizon", csv_number(s.penalty_level), csv_number(gap), csv_number(comp),
                              std::to_string(s.meta.sweeps)});
        }
        r["finite_horizon"] = frows;
        r["finite_horizon_reference_Y0"] = field_json(it.Y.front());
        c.check_le("penalized.finite_below_iterative", excess, 1e-9 * scale);
        c.check_le("penalized.finite_martingale", mart, 1e-12);
    }
    c.report.tables.push_back(std::move(t));
}

void cmd_solve_oblique(Context& c) {
    const auto& gen = c.inst.gen();
    const auto& drv = c.inst.drv();
    const auto& bar = c.inst.bar();
    const TimeGrid& grid = c.grid();
    const PathEnvelope penv = build_path_envelope(gen, grid, drv, bar);
    const double scale = std::max(1.0, path_scale(penv));
    const ReflectedSolution sol = solve_oblique_iterative(gen, grid, drv, bar, penv, c.picard());
    json& r = c.results("solve-oblique");
    r["Y0"] = field_json(sol.Y.front());
    r["K_total"] = field_json(sol.K.back());
    r["sweeps"] = sol.meta.sweeps;
    r["final_increment"] = sol.meta.final_increment;
    r["horizon"] = grid.horizon();
    const double mart = martingale_check(sol, gen);
    const double comp = complementarity_residual(sol, bar);
    const double dom = domination_residual(sol, bar);
    r["residuals"] = {{"martingale", mart}, {"complementarity", comp}, {"domination", dom}};
    c.check_le("oblique.martingale", mart, 1e-12);
    c.check_le("oblique.complementarity", comp, 1e-8 * scale);
    c.check_le("oblique.domination", dom, 1e-9);
    c.check_ge("oblique.reflection_nonnegative", min_reflection_increment(sol), 0.0);
    c.check_le("oblique.pushes_off_contact", static_cast<double>(off_contact_pushes(sol, bar, c.inst.run.contact_tol * scale)),
               0.0);
    c.check_le("oblique.monotone_violations", static_cast<double>(sol.meta.monotone_violations), 0.0);

    CsvTable t{"oblique_Y.csv", {"step", "mode", "state", "Y", "K"}, {}};
    for (std::size_t k = 0; k < sol.Y.size(); ++k)
        for (Index j = 0; j < sol.modes(); ++j)
            for (Index x = 0; x < sol.states; ++x)
                t.rows.push_back({std::to_string(k), std::to_string(j + 1), std::to_string(x), csv_number(sol.Y[k](j, x)),
                                  csv_number(sol.K[k](j, x))});
    c.report.tables.push_back(std::move(t));
}

json policy_json(const FeedbackPolicy& pol) {
    json actions = json::array();
    for (Index k = 0; k < pol.steps(); ++k) {
        json step = json::array();
        for (Index j = 0; j < pol.modes(); ++j) {
            json row = json::array();
            for (Index x = 0; x < pol.states(); ++x) row.push_back(pol.action(k, j, x) + 1);
            step.push_back(row);
        }
        actions.push_back(step);
    }
    return {{"steps", pol.steps()}, {"modes", pol.modes()}, {"states", pol.states()},
            {"encoding", "actions[k][mode-1][state]: 0 = stay, i = switch to mode i"}, {"actions", actions}};
}

void cmd_switching_value(Context& c) {
    const auto& gen = c.inst.gen();
    const auto& drv = c.inst.drv();
    const auto& bar = c.inst.bar();
    const TimeGrid& grid = c.grid();
    const Vector terminal = switching_terminal(drv);
    const SwitchingValue val = value_via_dp(gen, grid, drv, bar, terminal);
    const FieldPath J = evaluate_feedback_policy(gen, grid, drv, bar, terminal, val.policy);
    const PathEnvelope penv = build_path_envelope(gen, grid, drv, bar);
    const ReflectedSolution ob = solve_oblique_iterative(gen, grid, drv, bar, penv, c.picard());
    json& r = c.results("switching-value");
    r["V0"] = field_json(val.V.front());
    r["switch_count_bound"] = val.switch_count_bound;
    c.check_le("switching.verification_identity", sup_distance(J, val.V), 1e-9);
    c.check_le("switching.rbsde_identity", sup_distance(ob.Y, val.V), 1e-8);
    c.report.exports.push_back({"strategy.json", policy_json(val.policy)});
}

void cmd_oracle(Context& c) {
    const auto& gen = c.inst.gen();
    const auto& drv = c.inst.drv();
    const auto& bar = c.inst.bar();
    const TimeGrid& grid = c.grid();
    const Vector terminal = switching_terminal(drv);
    const SwitchingValue bf = brute_force_value(gen, grid, drv, bar, terminal, c.inst.run.enumeration_cap);
    const SwitchingValue dp = value_via_dp(gen, grid, drv, bar, terminal);
    json& r = c.results("oracle");
    r["policy_space_bound"] = policy_space_bound(bar, grid.steps);
    r["V0_brute_force"] = field_json(bf.V.front());
    r["V0_dp"] = field_json(dp.V.front());
    c.check_le("oracle.brute_force_vs_dp", sup_distance(bf.V, dp.V), 1e-10);
}

void cmd_simulate(Context& c) {
    const auto& gen = c.inst.gen();
    const auto& drv = c.inst.drv();
    const auto& bar = c.inst.bar();
    const TimeGrid& grid = c.grid();
    const auto& run = c.inst.run;
    require(run.paths >= 1, ErrorKind::InvalidArgument, "simulate needs run.paths >= 1");
    const Vector terminal = switching_terminal(drv);
    const SwitchingValue val = value_via_dp(gen, grid, drv, bar, terminal);
    const McStats st = simulate_strategy(gen, grid, run.x0, run.j0, drv, bar, terminal, val.policy, run.paths, c.seed);
    const double target = val.V.front()(run.j0, run.x0);
    const double z = st.std_error > 0.0 ? std::abs(st.mean - target) / st.std_error
                                        : (std::abs(st.mean - target) <= 1e-12 ? 0.0 : INFINITY);
    json& r = c.results("simulate");
    r["paths"] = run.paths;
    r["x0"] = run.x0;
    r["j0"] = run.j0 + 1;
    r["mean"] = st.mean;
    r["std_error"] = st.std_error;
    r["target"] = target;
    r["z"] = z;
    c.check_le("simulate.z_score", z, 3.0);
    c.report.tables.push_back({"simulation.csv",
                               {"paths", "mean", "stderr", "target", "z"},
                               {{std::to_string(run.paths), csv_number(st.mean), csv_number(st.std_error),
                                 csv_number(target), csv_number(z)}}});
}

void cmd_feynman_kac(Context& c) {
    const auto& gen = c.inst.gen();
    const auto& drv = c.inst.drv();
    const auto& bar = c.inst.bar();
    const auto& run = c.inst.run;
    require(run.paths >= 2, ErrorKind::InvalidArgument, "feynman-kac needs run.paths >= 2");
    const Envelope env = build_envelope(gen, drv, bar);
    const QviSolution q = solve_qvi_policy_iteration(gen, drv, bar, env, PolicyStart::Lower, c.qvi());
    const auto fk = feynman_kac_check(gen, q, drv, run.x0, run.paths, c.seed);
    json rows = json::array();
    CsvTable t{"feynman_kac.csv", {"mode", "estimate", "stderr", "target", "z"}, {}};
    double worst = 0.0;
    for (const auto& f : fk) {
        rows.push_back({{"mode", f.mode + 1}, {"estimate", f.estimate}, {"std_error", f.std_error},
                        {"target", f.target}, {"z", f.z}});
        t.rows.push_back({std::to_string(f.mode + 1), csv_number(f.estimate), csv_number(f.std_error),
                          csv_number(f.target), csv_number(f.z)});
        worst = std::max(worst, f.z);
    }
    json& r = c.results("feynman-kac");
    r["x0"] = run.x0;
    r["paths"] = run.paths;
    r["modes"] = rows;
    c.check_le("feynman_kac.max_z", worst, 3.0);
    c.report.tables.push_back(std::move(t));
}

void cmd_horizon(Context& c) {
    const auto& run = c.inst.run;
    const HorizonReport h =
        elliptic_from_horizon(c.inst.gen(), c.grid().dt, run.horizons, c.inst.drv(), c.inst.bar());
    json rows = json::array();
    for (const auto& row : h.rows)
        rows.push_back({{"steps", row.steps}, {"horizon", row.horizon}, {"gap", row.gap}, {"survival", row.survival},
                        {"ratio", row.ratio}, {"ratio_checked", row.ratio_checked}});
    c.results("horizon")["rows"] = rows;
    double worst = 0.0;
    for (const auto& row : h.rows)
        if (row.ratio_checked) worst = std::max(worst, row.ratio / row.survival);
    c.check_le("horizon.ratio_over_survival", worst, 1.1);
}

}  // namespace

RunReport run_command(const std::string& command, const InstanceFile& inst, const RunFlags& flags) {
    RunReport report;
    report.command = command;
    Context c{inst, flags.seed.value_or(inst.run.seed), report, ""};
    static const std::map<std::string, std::function<void(Context&)>> table{
        {"solve-qvi", cmd_solve_qvi},       {"solve-penalized", cmd_solve_penalized},
        {"solve-oblique", cmd_solve_oblique}, {"switching-value", cmd_switching_value},
        {"oracle", cmd_oracle},             {"simulate", cmd_simulate},
        {"feynman-kac", cmd_feynman_kac}};
    if (command == "report-all") {
        cmd_solve_qvi(c);
        cmd_solve_penalized(c);
        cmd_feynman_kac(c);
        if (inst.grid) {
            cmd_solve_oblique(c);
            if (!inst.run.horizons.empty()) cmd_horizon(c);
            const bool switching = inst.drv().kind() == DriverKind::Decoupled &&
                                   [&] { try { switching_terminal(inst.drv()); return true; } catch (const Error&) { return false; } }();
            if (switching) {
                cmd_switching_value(c);
                cmd_simulate(c);
                if (policy_space_bound(inst.bar(), inst.grid->steps) <= inst.run.enumeration_cap) cmd_oracle(c);
            }
        }
        return report;
    }
    const auto it = table.find(command);
    if (it == table.end()) fail(ErrorKind::InvalidArgument, "unknown command '" + command + "'");
    it->second(c);
    return report;
}

}  // namespace oswitch

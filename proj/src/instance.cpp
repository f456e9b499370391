#include "oswitch/instance.hpp"

#include "oswitch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace oswitch {

using nlohmann::json;

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

class Reader {
public:
    std::vector<SchemaIssue> issues;

    void add(const std::string& path, const std::string& msg) { issues.push_back({path, msg}); }

    void known(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) return;
        for (const auto& item : obj.items()) {
            const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                        [&](const char* k) { return item.key() == k; });
            if (!ok) add(join(path, item.key()), "unknown field");
        }
    }

    const json* child(const json& obj, const std::string& path, const char* key, bool required) {
        if (!obj.is_object()) {
            add(path, "expected an object");
            return nullptr;
        }
        const auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) add(join(path, key), "missing required field");
            return nullptr;
        }
        return &*it;
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }
    static std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

    std::optional<double> number(const json* v, const std::string& path) {
        if (v == nullptr) return std::nullopt;
        if (!v->is_number()) {
            add(path, "expected a number");
            return std::nullopt;
        }
        const double d = v->get<double>();
        if (!std::isfinite(d)) {
            add(path, "expected a finite number");
            return std::nullopt;
        }
        return d;
    }

    std::optional<std::int64_t> integer(const json* v, const std::string& path) {
        if (v == nullptr) return std::nullopt;
        if (!v->is_number_integer()) {
            add(path, "expected an integer");
            return std::nullopt;
        }
        return v->get<std::int64_t>();
    }

    std::optional<std::string> string(const json* v, const std::string& path) {
        if (v == nullptr) return std::nullopt;
        if (!v->is_string()) {
            add(path, "expected a string");
            return std::nullopt;
        }
        return v->get<std::string>();
    }

    std::optional<Vector> vector(const json* v, const std::string& path, Index n) {
        if (v == nullptr) return std::nullopt;
        if (v->is_number()) {
            const auto d = number(v, path);
            if (!d) return std::nullopt;
            return Vector::Constant(n, *d);
        }
        if (!v->is_array() || static_cast<Index>(v->size()) != n) {
            add(path, "expected a number or an array of " + std::to_string(n) + " numbers");
            return std::nullopt;
        }
        Vector out(n);
        bool ok = true;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const auto d = number(&(*v)[i], at(path, i));
            if (d) out(static_cast<Index>(i)) = *d; else ok = false;
        }
        return ok ? std::optional<Vector>(out) : std::nullopt;
    }

    std::optional<Matrix> matrix(const json* v, const std::string& path, Index rows, Index cols) {
        if (v == nullptr) return std::nullopt;
        if (!v->is_array() || static_cast<Index>(v->size()) != rows) {
            add(path, "expected an array of " + std::to_string(rows) + " rows");
            return std::nullopt;
        }
        Matrix out(rows, cols);
        bool ok = true;
        for (std::size_t r = 0; r < v->size(); ++r) {
            const auto row = vector(&(*v)[r], at(path, r), cols);
            if (row) out.row(static_cast<Index>(r)) = row->transpose(); else ok = false;
        }
        return ok ? std::optional<Matrix>(out) : std::nullopt;
    }

    // Per-mode fields: N entries, each a number (constant over states) or n numbers.
    std::optional<ModeField> mode_field(const json* v, const std::string& path, Index N, Index n) {
        if (v == nullptr) return std::nullopt;
        if (!v->is_array() || static_cast<Index>(v->size()) != N) {
            add(path, "expected one entry per mode (" + std::to_string(N) + ")");
            return std::nullopt;
        }
        ModeField out(N, n);
        bool ok = true;
        for (std::size_t j = 0; j < v->size(); ++j) {
            const auto row = vector(&(*v)[j], at(path, j), n);
            if (row) out.row(static_cast<Index>(j)) = row->transpose(); else ok = false;
        }
        return ok ? std::optional<ModeField>(out) : std::nullopt;
    }

    template <typename Build>
    void construct(const std::string& path, Build&& build) {
        try {
            build();
        } catch (const Error& e) {
            add(path, std::string(to_string(e.kind())) + ": " + e.what());
        }
    }
};

void parse_chain(Reader& rd, const json& doc, InstanceFile& inst) {
    const json* chain = rd.child(doc, "", "chain", true);
    if (chain == nullptr) return;
    const std::string path = "chain";
    rd.known(*chain, path, {"states", "family", "params", "killing", "labels"});
    ChainSpec spec;
    const auto states = rd.integer(rd.child(*chain, path, "states", true), path + ".states");
    if (!states) return;
    if (*states < 1) {
        rd.add(path + ".states", "must be >= 1");
        return;
    }
    spec.states = *states;
    const Index n = spec.states;

    const auto family = rd.string(rd.child(*chain, path, "family", true), path + ".family");
    const json* params = rd.child(*chain, path, "params", false);
    static const json empty = json::object();
    const json& p = params ? *params : empty;
    const std::string pp = path + ".params";
    if (family) {
        if (*family == "explicit") {
            spec.family = ChainFamily::Explicit;
            rd.known(p, pp, {"rates"});
            const json* rates = rd.child(p, pp, "rates", true);
            if (rates && rates->is_array() && !rates->empty() && (*rates)[0].is_array()) {
                if (auto m = rd.matrix(rates, pp + ".rates", n, n))
                    for (Index x = 0; x < n; ++x)
                        for (Index y = 0; y < n; ++y) spec.rates.push_back((*m)(x, y));
            } else if (auto v = rd.vector(rates, pp + ".rates", n * n)) {
                spec.rates.assign(v->data(), v->data() + v->size());
            }
        } else if (*family == "drift-diffusion") {
            spec.family = ChainFamily::DriftDiffusion;
            rd.known(p, pp, {"diffusion", "drift", "mesh"});
            if (auto a = rd.number(rd.child(p, pp, "diffusion", true), pp + ".diffusion")) spec.diffusion = *a;
            if (auto b = rd.number(rd.child(p, pp, "drift", false), pp + ".drift")) spec.drift = *b;
            if (auto h = rd.number(rd.child(p, pp, "mesh", false), pp + ".mesh")) spec.mesh = *h;
        } else if (*family == "jump-kernel") {
            spec.family = ChainFamily::JumpKernel;
            rd.known(p, pp, {"intensity", "alpha_min", "alpha_max", "range", "mesh"});
            if (auto c = rd.number(rd.child(p, pp, "intensity", true), pp + ".intensity")) spec.intensity = *c;
            if (auto a = rd.number(rd.child(p, pp, "alpha_min", true), pp + ".alpha_min")) spec.alpha_min = *a;
            if (auto a = rd.number(rd.child(p, pp, "alpha_max", true), pp + ".alpha_max")) spec.alpha_max = *a;
            if (auto r = rd.integer(rd.child(p, pp, "range", true), pp + ".range")) spec.range = *r;
            if (auto h = rd.number(rd.child(p, pp, "mesh", false), pp + ".mesh")) spec.mesh = *h;
        } else {
            rd.add(path + ".family", "unknown family '" + *family + "' (explicit | drift-diffusion | jump-kernel)");
        }
    }
    if (auto k = rd.vector(rd.child(*chain, path, "killing", false), path + ".killing", n)) spec.killing = *k;
    if (const json* labels = rd.child(*chain, path, "labels", false)) {
        if (!labels->is_array() || static_cast<Index>(labels->size()) != n) {
            rd.add(path + ".labels", "expected " + std::to_string(n) + " strings");
        } else {
            for (std::size_t i = 0; i < labels->size(); ++i)
                if (auto s = rd.string(&(*labels)[i], Reader::at(path + ".labels", i))) spec.labels.push_back(*s);
        }
    }
    inst.chain_spec = spec;
    if (rd.issues.empty()) rd.construct(path, [&] { inst.generator = build_generator(spec); });
}

void parse_grid(Reader& rd, const json& doc, InstanceFile& inst) {
    const json* grid = rd.child(doc, "", "grid", false);
    if (grid == nullptr) return;
    rd.known(*grid, "grid", {"dt", "steps", "guard"});
    const auto dt = rd.number(rd.child(*grid, "grid", "dt", true), "grid.dt");
    const auto steps = rd.integer(rd.child(*grid, "grid", "steps", true), "grid.steps");
    auto guard = rd.number(rd.child(*grid, "grid", "guard", false), "grid.guard");
    if (!dt || !steps) return;
    rd.construct("grid", [&] {
        inst.grid = TimeGrid::make(*dt, *steps, guard.value_or(0.5));
        if (inst.generator) inst.grid->check_resolution(*inst.generator);
    });
}

void parse_driver(Reader& rd, const json& doc, InstanceFile& inst, Index n) {
    const json* d = rd.child(doc, "", "driver", true);
    if (d == nullptr) return;
    const std::string path = "driver";
    rd.known(*d, path, {"N", "kind", "psi", "mu", "xi", "coupling"});
    const auto N = rd.integer(rd.child(*d, path, "N", true), path + ".N");
    if (!N) return;
    if (*N < 1) {
        rd.add(path + ".N", "must be >= 1");
        return;
    }
    const auto kind = rd.string(rd.child(*d, path, "kind", true), path + ".kind");
    auto psi = rd.mode_field(rd.child(*d, path, "psi", true), path + ".psi", *N, n);
    auto mu = rd.mode_field(rd.child(*d, path, "mu", false), path + ".mu", *N, n);
    auto xi = rd.mode_field(rd.child(*d, path, "xi", false), path + ".xi", *N, n);
    if (!kind || !psi) return;
    const ModeField mu_v = mu.value_or(ModeField{});
    const ModeField xi_v = xi.value_or(ModeField{});
    const json* coupling = rd.child(*d, path, "coupling", *kind != "decoupled");
    const std::string cp = path + ".coupling";

    if (*kind == "decoupled") {
        rd.construct(path, [&] { inst.driver = DriverSystem::decoupled(*psi, mu_v, xi_v); });
    } else if (*kind == "affine") {
        if (coupling == nullptr) return;
        rd.known(*coupling, cp, {"G"});
        const json* G = rd.child(*coupling, cp, "G", true);
        if (G == nullptr) return;
        std::vector<Matrix> per_state;
        const bool stacked = G->is_array() && !G->empty() && (*G)[0].is_array() && !(*G)[0].empty() &&
                             (*G)[0][0].is_array();
        if (stacked) {
            if (static_cast<Index>(G->size()) != n) {
                rd.add(cp + ".G", "expected one N x N matrix per state");
                return;
            }
            for (std::size_t x = 0; x < G->size(); ++x) {
                auto m = rd.matrix(&(*G)[x], Reader::at(cp + ".G", x), *N, *N);
                if (!m) return;
                per_state.push_back(*m);
            }
        } else {
            auto m = rd.matrix(G, cp + ".G", *N, *N);
            if (!m) return;
            per_state.assign(static_cast<std::size_t>(n), *m);
        }
        rd.construct(cp, [&] { inst.driver = DriverSystem::affine(*psi, per_state, mu_v, xi_v); });
    } else if (*kind == "smooth-coupled") {
        if (coupling == nullptr) return;
        rd.known(*coupling, cp, {"lambda", "alpha"});
        auto lambda = rd.vector(rd.child(*coupling, cp, "lambda", true), cp + ".lambda", *N);
        auto alpha = rd.matrix(rd.child(*coupling, cp, "alpha", true), cp + ".alpha", *N, *N);
        if (!lambda || !alpha) return;
        rd.construct(cp, [&] { inst.driver = DriverSystem::smooth_coupled(*psi, *lambda, *alpha, mu_v, xi_v); });
    } else {
        rd.add(path + ".kind", "unknown kind '" + *kind + "' (decoupled | affine | smooth-coupled)");
    }
}

void parse_barrier(Reader& rd, const json& doc, InstanceFile& inst, Index N, Index n) {
    const json* b = rd.child(doc, "", "barrier", false);
    if (b == nullptr) {
        inst.barrier = BarrierSystem::none(N, n);
        return;
    }
    const std::string path = "barrier";
    rd.known(*b, path, {"form", "adjacency", "costs", "cost_floor"});
    const auto form = rd.string(rd.child(*b, path, "form", false), path + ".form").value_or("cost");
    if (form != "cost" && form != "general") {
        rd.add(path + ".form", "expected 'cost' or 'general'");
        return;
    }
    std::vector<std::vector<BarrierSystem::Edge>> edges(static_cast<std::size_t>(N));
    const std::size_t before = rd.issues.size();

    if (const json* adj = rd.child(*b, path, "adjacency", false)) {
        const std::string ap = path + ".adjacency";
        if (!adj->is_array() || static_cast<Index>(adj->size()) != N) {
            rd.add(ap, "expected one target list per mode (" + std::to_string(N) + ")");
        } else {
            for (std::size_t j = 0; j < adj->size(); ++j) {
                const json& list = (*adj)[j];
                if (!list.is_array()) {
                    rd.add(Reader::at(ap, j), "expected an array of 1-based mode numbers");
                    continue;
                }
                for (std::size_t t = 0; t < list.size(); ++t) {
                    const std::string tp = Reader::at(Reader::at(ap, j), t);
                    const auto target = rd.integer(&list[t], tp);
                    if (!target) continue;
                    if (*target < 1 || *target > N)
                        rd.add(tp, "mode " + std::to_string(*target) + " outside 1.." + std::to_string(N));
                    else if (*target == static_cast<std::int64_t>(j) + 1)
                        rd.add(tp, "a mode cannot switch to itself");
                    else
                        edges[j].push_back({*target - 1, Vector::Constant(n, std::nan("")), std::numeric_limits<double>::infinity()});
                }
            }
        }
    }

    if (const json* costs = rd.child(*b, path, "costs", false)) {
        const std::string cp = path + ".costs";
        if (!costs->is_array()) {
            rd.add(cp, "expected an array of {from, to, value} entries");
        } else {
            for (std::size_t c = 0; c < costs->size(); ++c) {
                const std::string ep = Reader::at(cp, c);
                const json& entry = (*costs)[c];
                rd.known(entry, ep, {"from", "to", "value", "cap"});
                const auto from = rd.integer(rd.child(entry, ep, "from", true), ep + ".from");
                const auto to = rd.integer(rd.child(entry, ep, "to", true), ep + ".to");
                const auto value = rd.vector(rd.child(entry, ep, "value", true), ep + ".value", n);
                const auto cap = rd.number(rd.child(entry, ep, "cap", false), ep + ".cap");
                if (!from || !to || !value) continue;
                if (*from < 1 || *from > N || *to < 1 || *to > N) {
                    rd.add(ep, "mode outside 1.." + std::to_string(N));
                    continue;
                }
                auto& list = edges[static_cast<std::size_t>(*from - 1)];
                auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.target == *to - 1; });
                if (it == list.end()) {
                    rd.add(ep, "cost given for a switch not in the adjacency");
                    continue;
                }
                it->cost = *value;
                it->cap = cap.value_or(std::numeric_limits<double>::infinity());
                if (cap && form == "cost") rd.add(ep + ".cap", "caps are only allowed for the general form");
            }
        }
    }
    for (Index j = 0; j < N; ++j)
        for (const auto& e : edges[static_cast<std::size_t>(j)])
            if (e.cost.hasNaN())
                rd.add(path + ".costs", "missing cost for switch " + std::to_string(j + 1) + " -> " +
                                            std::to_string(e.target + 1));
    const auto floor = rd.number(rd.child(*b, path, "cost_floor", form == "cost"), path + ".cost_floor");
    if (rd.issues.size() != before) return;
    if (form == "cost") {
        if (!floor) return;
        rd.construct(path, [&] { inst.barrier = BarrierSystem::cost_form(n, edges, *floor); });
    } else {
        rd.construct(path, [&] { inst.barrier = BarrierSystem::general_form(n, edges); });
    }
}

void parse_run(Reader& rd, const json& doc, InstanceFile& inst, Index N, Index n) {
    const json* r = rd.child(doc, "", "run", false);
    if (r == nullptr) return;
    RunConfig& cfg = inst.run;
    const std::string p = "run";
    rd.known(*r, p, {"tol", "max_sweeps", "gauss_seidel", "seed", "penalty_levels", "paths", "x0", "j0",
                     "enumeration_cap", "horizons", "contact_tol"});
    if (auto v = rd.number(rd.child(*r, p, "tol", false), p + ".tol")) {
        if (*v > 0.0) cfg.tol = *v; else rd.add(p + ".tol", "must be > 0");
    }
    if (auto v = rd.integer(rd.child(*r, p, "max_sweeps", false), p + ".max_sweeps")) {
        if (*v >= 1) cfg.max_sweeps = static_cast<int>(*v); else rd.add(p + ".max_sweeps", "must be >= 1");
    }
    if (const json* gs = rd.child(*r, p, "gauss_seidel", false)) {
        if (gs->is_boolean()) cfg.gauss_seidel = gs->get<bool>(); else rd.add(p + ".gauss_seidel", "expected a boolean");
    }
    if (const json* s = rd.child(*r, p, "seed", false)) {
        if (s->is_number_unsigned()) cfg.seed = s->get<std::uint64_t>();
        else rd.add(p + ".seed", "expected a nonnegative integer");
    }
    if (const json* lv = rd.child(*r, p, "penalty_levels", false)) {
        if (!lv->is_array() || lv->empty()) {
            rd.add(p + ".penalty_levels", "expected a nonempty array");
        } else {
            cfg.penalty_levels.clear();
            for (std::size_t i = 0; i < lv->size(); ++i)
                if (auto v = rd.number(&(*lv)[i], Reader::at(p + ".penalty_levels", i))) {
                    if (*v < 0.0 || (!cfg.penalty_levels.empty() && *v <= cfg.penalty_levels.back()))
                        rd.add(Reader::at(p + ".penalty_levels", i), "levels must be >= 0 and strictly increasing");
                    cfg.penalty_levels.push_back(*v);
                }
        }
    }
    if (auto v = rd.integer(rd.child(*r, p, "paths", false), p + ".paths")) {
        if (*v >= 0) cfg.paths = *v; else rd.add(p + ".paths", "must be >= 0");
    }
    if (auto v = rd.integer(rd.child(*r, p, "x0", false), p + ".x0")) {
        if (*v >= 0 && *v < n) cfg.x0 = *v; else rd.add(p + ".x0", "state outside 0.." + std::to_string(n - 1));
    }
    if (auto v = rd.integer(rd.child(*r, p, "j0", false), p + ".j0")) {
        if (*v >= 1 && *v <= N) cfg.j0 = *v - 1; else rd.add(p + ".j0", "mode outside 1.." + std::to_string(N));
    }
    if (auto v = rd.number(rd.child(*r, p, "enumeration_cap", false), p + ".enumeration_cap")) {
        if (*v >= 1.0) cfg.enumeration_cap = *v; else rd.add(p + ".enumeration_cap", "must be >= 1");
    }
    if (const json* hz = rd.child(*r, p, "horizons", false)) {
        if (!hz->is_array() || hz->empty()) {
            rd.add(p + ".horizons", "expected a nonempty array of step counts");
        } else {
            for (std::size_t i = 0; i < hz->size(); ++i)
                if (auto v = rd.integer(&(*hz)[i], Reader::at(p + ".horizons", i))) {
                    if (*v < 0 || (!cfg.horizons.empty() && *v <= cfg.horizons.back()))
                        rd.add(Reader::at(p + ".horizons", i), "horizons must be >= 0 and increasing");
                    cfg.horizons.push_back(*v);
                }
        }
    }
    if (auto v = rd.number(rd.child(*r, p, "contact_tol", false), p + ".contact_tol")) {
        if (*v > 0.0) cfg.contact_tol = *v; else rd.add(p + ".contact_tol", "must be > 0");
    }
}

}  // namespace

InstanceFile parse_instance_json(const json& doc, const std::string& source, const std::string& digest) {
    Reader rd;
    InstanceFile inst;
    inst.source = source;
    inst.digest = digest;
    if (!doc.is_object()) throw SchemaError(std::vector<SchemaIssue>{{"$", "instance must be a JSON object"}});
    for (const auto& [key, value] : doc.items())
        if (key != "chain" && key != "grid" && key != "driver" && key != "barrier" && key != "run")
            rd.add(key, "unknown section");

    parse_chain(rd, doc, inst);
    const Index n = inst.chain_spec.states;
    parse_grid(rd, doc, inst);
    if (n >= 1) parse_driver(rd, doc, inst, n);
    const Index N = inst.driver ? inst.driver->modes() : 0;
    if (N >= 1) parse_barrier(rd, doc, inst, N, n);
    if (N >= 1) parse_run(rd, doc, inst, N, n);

    if (!rd.issues.empty()) throw SchemaError(std::move(rd.issues));
    require(inst.generator && inst.driver && inst.barrier, ErrorKind::InvariantViolated, "incomplete instance");
    return inst;
}

InstanceFile parse_instance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot read instance file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::vector<SchemaIssue>{{"$", std::string("invalid JSON: ") + e.what()}});
    }
    return parse_instance_json(doc, path, fnv1a_hex(bytes));
}

}  // namespace oswitch

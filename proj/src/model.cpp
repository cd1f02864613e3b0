#include "halfline/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace halfline {

Grid Grid::continuum(double horizon, double h) {
    if (h <= 0.0 || horizon <= 0.0)
        throw std::invalid_argument("grid: horizon and step must be positive");
    Grid g;
    g.kind = Kind::continuum;
    g.h = h;
    g.npoints = static_cast<size_t>(std::ceil(horizon / h - 1e-9)) + 1;
    return g;
}

Grid Grid::discrete(size_t nmax) {
    Grid g;
    g.kind = Kind::discrete;
    g.h = 1.0;
    g.npoints = nmax + 1;
    return g;
}

std::pair<double, int> BoundaryCondition::canonical() const {
    double t = std::fmod(theta, 2.0 * PI);
    if (t < 0) t += 2.0 * PI;
    int sign = 1;
    if (t >= PI) { t -= PI; sign = -1; }
    return {t, sign};
}

namespace {

double bump_profile(double amplitude, double support_end, double x) {
    if (x <= 0.0 || x >= support_end) return 0.0;
    double t = (2.0 * x - support_end) / support_end; // in (-1, 1)
    double q = 1.0 - t * t;
    return amplitude * std::exp(1.0 - 1.0 / q);
}

double bump_profile_deriv(double amplitude, double support_end, double x) {
    if (x <= 0.0 || x >= support_end) return 0.0;
    double t = (2.0 * x - support_end) / support_end;
    double q = 1.0 - t * t;
    double w = amplitude * std::exp(1.0 - 1.0 / q);
    return w * (-2.0 * t / (q * q)) * (2.0 / support_end);
}

double interp_tab(const Tabulated& tab, double x) {
    if (tab.x.empty()) throw std::invalid_argument("tabulated rule with empty table");
    if (x < tab.x.front() - 1e-12 || x > tab.x.back() + 1e-12)
        throw std::out_of_range("tabulated potential queried outside its table");
    auto it = std::upper_bound(tab.x.begin(), tab.x.end(), x);
    if (it == tab.x.begin()) return tab.v.front();
    if (it == tab.x.end()) return tab.v.back();
    size_t i = static_cast<size_t>(it - tab.x.begin());
    double x0 = tab.x[i - 1], x1 = tab.x[i];
    double t = (x1 == x0) ? 0.0 : (x - x0) / (x1 - x0);
    return tab.v[i - 1] * (1.0 - t) + tab.v[i] * t;
}

double sign_factor(SignRule s, double freq, Kind kind, double x) {
    switch (s) {
        case SignRule::plus: return 1.0;
        case SignRule::alternating: {
            if (kind != Kind::discrete)
                throw std::invalid_argument("alternating sign rule is discrete-only");
            long long n = static_cast<long long>(std::llround(x));
            return (n % 2 == 0) ? 1.0 : -1.0;
        }
        case SignRule::sinusoid: return std::sin(freq * x);
    }
    return 1.0;
}

} // namespace

double PotentialSpec::evaluate(Kind kind, double x) const {
    switch (rule) {
        case Rule::zero: return 0.0;
        case Rule::constant: return c;
        case Rule::euler: {
            double xe = std::max(x, x_cut);
            return c / (xe * xe);
        }
        case Rule::linear: return slope * x;
        case Rule::anderson: {
            if (kind != Kind::discrete)
                throw std::invalid_argument("random rules are discrete-only");
            uint64_t n = static_cast<uint64_t>(std::llround(x));
            return coupling * sym_uniform(seed, n);
        }
        case Rule::decaying_anderson: {
            if (kind != Kind::discrete)
                throw std::invalid_argument("random rules are discrete-only");
            uint64_t n = static_cast<uint64_t>(std::llround(x));
            if (n == 0) return 0.0;
            return coupling * std::pow(static_cast<double>(n), -envelope) * sym_uniform(seed, n);
        }
        case Rule::tabulated: return interp_tab(tab, x);
        case Rule::sum: {
            double s = 0;
            for (const auto& t : terms) s += t.evaluate(kind, x);
            return s;
        }
        case Rule::power_law:
            return c * std::pow(1.0 + x, -eta) * sign_factor(sign, freq, kind, x);
        case Rule::exp_weighted: return c * std::exp(-rate * x);
        case Rule::compact_support: {
            if (x < 0.0 || x > support_end) return 0.0;
            if (!tab.x.empty()) {
                if (kind == Kind::discrete) {
                    size_t n = static_cast<size_t>(std::llround(x));
                    if (n == 0 || n > tab.v.size()) return 0.0;
                    return tab.v[n - 1];
                }
                return interp_tab(tab, x);
            }
            return bump_profile(amplitude, support_end, x);
        }
    }
    return 0.0;
}

std::optional<double> PotentialSpec::derivative(double x) const {
    switch (rule) {
        case Rule::zero: return 0.0;
        case Rule::constant: return 0.0;
        case Rule::euler:
            if (x < x_cut) return 0.0;
            return -2.0 * c / (x * x * x);
        case Rule::linear: return slope;
        case Rule::power_law: {
            double base = std::pow(1.0 + x, -eta);
            if (sign == SignRule::plus) return -eta * c * base / (1.0 + x);
            if (sign == SignRule::sinusoid)
                return c * (-eta * base / (1.0 + x) * std::sin(freq * x) + base * freq * std::cos(freq * x));
            return std::nullopt;
        }
        case Rule::exp_weighted: return -rate * c * std::exp(-rate * x);
        case Rule::compact_support:
            if (!tab.x.empty()) return std::nullopt;
            return bump_profile_deriv(amplitude, support_end, x);
        case Rule::sum: {
            double s = 0;
            for (const auto& t : terms) {
                auto d = t.derivative(x);
                if (!d) return std::nullopt;
                s += *d;
            }
            return s;
        }
        default: return std::nullopt;
    }
}

std::optional<double> PotentialSpec::bound() const {
    switch (rule) {
        case Rule::zero: return 0.0;
        case Rule::constant: return std::fabs(c);
        case Rule::euler: return std::fabs(c) / (x_cut * x_cut);
        case Rule::linear: return slope == 0.0 ? std::optional<double>(0.0) : std::nullopt;
        case Rule::anderson: return std::fabs(coupling) * std::sqrt(3.0);
        case Rule::decaying_anderson: return std::fabs(coupling) * std::sqrt(3.0);
        case Rule::tabulated: {
            double b = 0;
            for (double v : tab.v) b = std::max(b, std::fabs(v));
            return b;
        }
        case Rule::sum: {
            double s = 0;
            for (const auto& t : terms) {
                auto b = t.bound();
                if (!b) return std::nullopt;
                s += *b;
            }
            return s;
        }
        case Rule::power_law: return std::fabs(c);
        case Rule::exp_weighted: return std::fabs(c);
        case Rule::compact_support: {
            if (!tab.x.empty()) {
                double b = 0;
                for (double v : tab.v) b = std::max(b, std::fabs(v));
                return b;
            }
            return std::fabs(amplitude);
        }
    }
    return std::nullopt;
}

bool PotentialSpec::has_random() const {
    if (rule == Rule::anderson || rule == Rule::decaying_anderson) return true;
    if (rule == Rule::sum)
        for (const auto& t : terms)
            if (t.has_random()) return true;
    return false;
}

double PotentialSpec::deterministic_part(Kind kind, double x) const {
    if (rule == Rule::anderson || rule == Rule::decaying_anderson) return 0.0;
    if (rule == Rule::sum) {
        double s = 0;
        for (const auto& t : terms) s += t.deterministic_part(kind, x);
        return s;
    }
    return evaluate(kind, x);
}

std::vector<double> PotentialSpec::evaluate_grid(const Grid& g) const {
    std::vector<double> out(g.npoints);
    for (size_t i = 0; i < g.npoints; ++i) out[i] = evaluate(g.kind, g.x(i));
    return out;
}

PotentialSpec PotentialSpec::zero_potential() { return PotentialSpec{}; }
PotentialSpec PotentialSpec::constant(double c) {
    PotentialSpec p; p.rule = Rule::constant; p.c = c; return p;
}
PotentialSpec PotentialSpec::euler(double c, double x_cut) {
    if (x_cut <= 0.0) throw std::invalid_argument("euler rule needs x_cut > 0");
    PotentialSpec p; p.rule = Rule::euler; p.c = c; p.x_cut = x_cut; return p;
}
PotentialSpec PotentialSpec::linear(double slope) {
    PotentialSpec p; p.rule = Rule::linear; p.slope = slope; return p;
}
PotentialSpec PotentialSpec::anderson(double coupling, uint64_t seed) {
    PotentialSpec p; p.rule = Rule::anderson; p.coupling = coupling; p.seed = seed; p.envelope = 0.0; return p;
}
PotentialSpec PotentialSpec::decaying_anderson(double coupling, uint64_t seed) {
    PotentialSpec p; p.rule = Rule::decaying_anderson; p.coupling = coupling; p.seed = seed; p.envelope = 0.5; return p;
}
PotentialSpec PotentialSpec::tabulated_values(Tabulated t) {
    PotentialSpec p; p.rule = Rule::tabulated; p.tab = std::move(t); return p;
}
PotentialSpec PotentialSpec::power_law(double C, double eta, SignRule s, double freq) {
    if (eta < 0.0) throw std::invalid_argument("power-law rule needs eta >= 0");
    PotentialSpec p; p.rule = Rule::power_law; p.c = C; p.eta = eta; p.sign = s; p.freq = freq; return p;
}
PotentialSpec PotentialSpec::exp_weighted(double C, double rate) {
    if (rate <= 0.0) throw std::invalid_argument("exp-weighted rule needs rate > 0");
    PotentialSpec p; p.rule = Rule::exp_weighted; p.c = C; p.rate = rate; return p;
}
PotentialSpec PotentialSpec::bump(double amplitude, double support_end) {
    if (support_end <= 0.0) throw std::invalid_argument("bump needs support_end > 0");
    PotentialSpec p; p.rule = Rule::compact_support; p.amplitude = amplitude; p.support_end = support_end; return p;
}
PotentialSpec PotentialSpec::compact_values(std::vector<double> values, double support_end, Kind kind) {
    PotentialSpec p;
    p.rule = Rule::compact_support;
    p.support_end = support_end;
    if (kind == Kind::discrete) {
        p.tab.v = std::move(values);
        p.tab.x.resize(p.tab.v.size());
        for (size_t i = 0; i < p.tab.x.size(); ++i) p.tab.x[i] = static_cast<double>(i + 1);
    } else {
        p.tab.v = std::move(values);
        if (p.tab.v.size() < 2) throw std::invalid_argument("compact table needs two or more samples");
        p.tab.x.resize(p.tab.v.size());
        for (size_t i = 0; i < p.tab.x.size(); ++i)
            p.tab.x[i] = support_end * static_cast<double>(i) / static_cast<double>(p.tab.x.size() - 1);
    }
    return p;
}

PotentialSpec PotentialSpec::with_seed(uint64_t s) const {
    PotentialSpec p = *this;
    if (p.rule == Rule::anderson || p.rule == Rule::decaying_anderson) p.seed = s;
    if (p.rule == Rule::sum)
        for (auto& t : p.terms) t = t.with_seed(s);
    return p;
}

PotentialSpec sum_potential(const PotentialSpec& a, const PotentialSpec& b) {
    PotentialSpec p;
    p.rule = Rule::sum;
    p.terms = {a, b};
    return p;
}

std::optional<RandomLeaf> single_random_leaf(const PotentialSpec& spec) {
    std::vector<const PotentialSpec*> leaves;
    std::vector<const PotentialSpec*> stack{&spec};
    while (!stack.empty()) {
        const PotentialSpec* s = stack.back();
        stack.pop_back();
        if (s->rule == Rule::anderson || s->rule == Rule::decaying_anderson) leaves.push_back(s);
        if (s->rule == Rule::sum)
            for (const auto& t : s->terms) stack.push_back(&t);
    }
    if (leaves.empty()) return std::nullopt;
    if (leaves.size() > 1)
        throw std::invalid_argument("at most one random term is supported per potential");
    RandomLeaf leaf;
    leaf.coupling = leaves[0]->coupling;
    leaf.envelope = leaves[0]->rule == Rule::anderson ? 0.0 : leaves[0]->envelope;
    leaf.seed = leaves[0]->seed;
    return leaf;
}

Grid grid_for(const PotentialSpec& V, double lambda, double horizon, double h_cap) {
    auto b = V.bound();
    double scale = std::fabs(lambda) + (b ? *b : 0.0);
    double h = h_cap;
    if (scale > 0.0) h = std::min(h, 0.05 / std::sqrt(scale));
    return Grid::continuum(horizon, h);
}

Tabulated load_tabulated(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open table file '" + path + "'");
    Tabulated t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        double x, v;
        if (ss >> x >> v) {
            if (!t.x.empty() && x <= t.x.back())
                throw ConfigError("table abscissae must increase", lineno, 1);
            t.x.push_back(x);
            t.v.push_back(v);
        }
    }
    if (t.x.empty()) throw ConfigError("table file '" + path + "' holds no samples");
    return t;
}

namespace {

std::string join_path(const std::string& dir, const std::string& file) {
    if (file.empty() || file.front() == '/') return file;
    if (dir.empty()) return file;
    return dir.back() == '/' ? dir + file : dir + "/" + file;
}

SignRule sign_from_text(const ConfigValue& v) {
    const std::string& s = v.as_string();
    if (s == "plus") return SignRule::plus;
    if (s == "alternating") return SignRule::alternating;
    if (s == "sin") return SignRule::sinusoid;
    throw ConfigError("unknown sign rule '" + s + "'", v.line, v.column);
}

PotentialSpec spec_from_config(const Config& cfg, const std::string& prefix,
                               const std::string& base_dir, bool perturbation) {
    const ConfigValue& rv = cfg.at(prefix + ".rule");
    const std::string rule = rv.as_string();
    auto num = [&](const char* k) { return cfg.number(prefix + "." + k); };
    auto num_or = [&](const char* k, double d) { return cfg.number_or(prefix + "." + k, d); };

    if (rule == "zero") return PotentialSpec::zero_potential();
    if (rule == "constant") return PotentialSpec::constant(num("c"));
    if (rule == "euler") return PotentialSpec::euler(num("c"), num_or("x_cut", 1.0));
    if (rule == "linear") return PotentialSpec::linear(num("slope"));
    if (rule == "anderson")
        return PotentialSpec::anderson(num("coupling"),
                                       static_cast<uint64_t>(cfg.integer_or(prefix + ".seed", 1)));
    if (rule == "decaying_anderson")
        return PotentialSpec::decaying_anderson(num("coupling"),
                                                static_cast<uint64_t>(cfg.integer_or(prefix + ".seed", 1)));
    if (rule == "tabulated")
        return PotentialSpec::tabulated_values(load_tabulated(join_path(base_dir, cfg.text(prefix + ".file"))));
    if (rule == "sum") {
        PotentialSpec p;
        p.rule = Rule::sum;
        for (int k = 1;; ++k) {
            std::string sub = prefix + ".term" + std::to_string(k);
            if (!cfg.has(sub + ".rule")) break;
            p.terms.push_back(spec_from_config(cfg, sub, base_dir, perturbation));
        }
        if (p.terms.empty())
            throw ConfigError("sum rule needs [" + prefix + ".term1] ...", rv.line, rv.column);
        return p;
    }
    if (rule == "power_law") {
        SignRule s = cfg.has(prefix + ".sign") ? sign_from_text(cfg.at(prefix + ".sign")) : SignRule::plus;
        return PotentialSpec::power_law(num("c"), num("eta"), s, num_or("freq", 1.0));
    }
    if (rule == "exp_weighted") return PotentialSpec::exp_weighted(num("c"), num("rate"));
    if (rule == "compact_support") {
        if (cfg.has(prefix + ".values")) {
            auto vals = cfg.numbers(prefix + ".values");
            Kind kind = cfg.text_or(prefix + ".kind", "continuum") == "discrete" ? Kind::discrete : Kind::continuum;
            return PotentialSpec::compact_values(std::move(vals), num("support_end"), kind);
        }
        if (cfg.has(prefix + ".file")) {
            Tabulated t = load_tabulated(join_path(base_dir, cfg.text(prefix + ".file")));
            PotentialSpec p;
            p.rule = Rule::compact_support;
            p.support_end = num_or("support_end", t.x.back());
            p.tab = std::move(t);
            return p;
        }
        return PotentialSpec::bump(num("amplitude"), num("support_end"));
    }
    throw ConfigError("unknown rule '" + rule + "'", rv.line, rv.column);
}

} // namespace

PotentialSpec potential_from_config(const Config& cfg, const std::string& prefix, const std::string& base_dir) {
    return spec_from_config(cfg, prefix, base_dir, false);
}

PerturbationSpec perturbation_from_config(const Config& cfg, const std::string& prefix, const std::string& base_dir) {
    return spec_from_config(cfg, prefix, base_dir, true);
}

} // namespace halfline

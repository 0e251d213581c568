#include "conjatlas/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace conjatlas {

namespace {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1;

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char take() {
        const char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }
    void skip_inline_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) take();
    }
    void skip_ws_and_comments() {
        while (!eof()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                take();
            } else if (c == '#') {
                while (!eof() && peek() != '\n') take();
            } else {
                break;
            }
        }
    }
};

[[noreturn]] void fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

std::string parse_bare_key(Cursor& cur) {
    std::string key;
    while (!cur.eof() &&
           (std::isalnum(static_cast<unsigned char>(cur.peek())) || cur.peek() == '_' ||
            cur.peek() == '-')) {
        key.push_back(cur.take());
    }
    if (key.empty()) fail(cur.line, "expected a key");
    return key;
}

TomlValue parse_value(Cursor& cur);

TomlValue parse_array(Cursor& cur) {
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    v.line = cur.line;
    cur.take();  // '['
    for (;;) {
        cur.skip_ws_and_comments();
        if (cur.eof()) fail(cur.line, "unterminated array");
        if (cur.peek() == ']') {
            cur.take();
            return v;
        }
        v.array.push_back(parse_value(cur));
        cur.skip_ws_and_comments();
        if (cur.eof()) fail(cur.line, "unterminated array");
        if (cur.peek() == ',') {
            cur.take();
        } else if (cur.peek() != ']') {
            fail(cur.line, "expected ',' or ']' in array");
        }
    }
}

TomlValue parse_value(Cursor& cur) {
    cur.skip_inline_ws();
    if (cur.eof()) fail(cur.line, "expected a value");
    const char c = cur.peek();
    TomlValue v;
    v.line = cur.line;
    if (c == '"') {
        cur.take();
        v.kind = TomlValue::Kind::string;
        while (!cur.eof() && cur.peek() != '"') {
            if (cur.peek() == '\n') fail(v.line, "unterminated string");
            v.str.push_back(cur.take());
        }
        if (cur.eof()) fail(v.line, "unterminated string");
        cur.take();
        return v;
    }
    if (c == '[') return parse_array(cur);
    std::string token;
    while (!cur.eof() && cur.peek() != ',' && cur.peek() != ']' && cur.peek() != '\n' &&
           cur.peek() != '#' && cur.peek() != ' ' && cur.peek() != '\t' && cur.peek() != '\r') {
        token.push_back(cur.take());
    }
    if (token == "true" || token == "false") {
        v.kind = TomlValue::Kind::boolean;
        v.b = token == "true";
        return v;
    }
    try {
        std::size_t used = 0;
        v.num = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
        fail(v.line, "cannot parse value '" + token + "'");
    }
    v.kind = TomlValue::Kind::number;
    return v;
}

}  // namespace

TomlDocument TomlDocument::parse(const std::string& text) {
    TomlDocument doc;
    Cursor cur{text};
    std::string table;
    for (;;) {
        cur.skip_ws_and_comments();
        if (cur.eof()) break;
        if (cur.peek() == '[') {
            const int line = cur.line;
            cur.take();
            table = parse_bare_key(cur);
            cur.skip_inline_ws();
            if (cur.eof() || cur.peek() != ']') fail(line, "expected ']' after table name");
            cur.take();
            doc.tables[table];  // tables may be empty
            continue;
        }
        const std::string key = parse_bare_key(cur);
        cur.skip_inline_ws();
        if (cur.eof() || cur.peek() != '=') fail(cur.line, "expected '=' after key '" + key + "'");
        cur.take();
        TomlValue value = parse_value(cur);
        cur.skip_inline_ws();
        if (!cur.eof() && cur.peek() != '\n' && cur.peek() != '#' && cur.peek() != '\r')
            fail(cur.line, "trailing characters after value of '" + key + "'");
        auto& tbl = doc.tables[table];
        if (tbl.count(key)) fail(value.line, "duplicate key '" + table + "." + key + "'");
        tbl[key] = std::move(value);
    }
    return doc;
}

TomlDocument TomlDocument::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

// ---------------------------------------------------------------------------
// Typed extraction with strict unknown-key rejection
// ---------------------------------------------------------------------------

namespace {

class SectionReader {
  public:
    SectionReader(const TomlDocument& doc, const std::string& table) : table_(table) {
        auto it = doc.tables.find(table);
        if (it != doc.tables.end()) entries_ = &it->second;
    }

    bool present() const { return entries_ != nullptr; }

    const TomlValue* find(const std::string& key) {
        if (!entries_) return nullptr;
        auto it = entries_->find(key);
        if (it == entries_->end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    const TomlValue& require(const std::string& key) {
        const TomlValue* v = find(key);
        if (!v) throw ConfigError("missing required key '" + table_ + "." + key + "'");
        return *v;
    }

    double number(const std::string& key, double fallback) {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != TomlValue::Kind::number)
            throw ConfigError("key '" + table_ + "." + key + "' must be a number");
        return v->num;
    }

    int integer(const std::string& key, int fallback) {
        const double d = number(key, fallback);
        if (d != std::floor(d))
            throw ConfigError("key '" + table_ + "." + key + "' must be an integer");
        return static_cast<int>(d);
    }

    bool boolean(const std::string& key, bool fallback) {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != TomlValue::Kind::boolean)
            throw ConfigError("key '" + table_ + "." + key + "' must be a boolean");
        return v->b;
    }

    std::string string(const std::string& key, const std::string& fallback) {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        if (v->kind != TomlValue::Kind::string)
            throw ConfigError("key '" + table_ + "." + key + "' must be a string");
        return v->str;
    }

    std::optional<Vec> vector(const std::string& key) {
        const TomlValue* v = find(key);
        if (!v) return std::nullopt;
        if (v->kind != TomlValue::Kind::array)
            throw ConfigError("key '" + table_ + "." + key + "' must be an array");
        Vec out(v->array.size());
        for (std::size_t i = 0; i < v->array.size(); ++i) {
            if (v->array[i].kind != TomlValue::Kind::number)
                throw ConfigError("key '" + table_ + "." + key + "' must contain numbers");
            out(static_cast<int>(i)) = v->array[i].num;
        }
        return out;
    }

    std::optional<Mat> matrix(const std::string& key) {
        const TomlValue* v = find(key);
        if (!v) return std::nullopt;
        if (v->kind != TomlValue::Kind::array || v->array.empty() ||
            v->array[0].kind != TomlValue::Kind::array)
            throw ConfigError("key '" + table_ + "." + key + "' must be an array of rows");
        const std::size_t cols = v->array[0].array.size();
        Mat out(v->array.size(), cols);
        for (std::size_t i = 0; i < v->array.size(); ++i) {
            const auto& row = v->array[i];
            if (row.kind != TomlValue::Kind::array || row.array.size() != cols)
                throw ConfigError("key '" + table_ + "." + key + "' has ragged rows");
            for (std::size_t j = 0; j < cols; ++j) {
                if (row.array[j].kind != TomlValue::Kind::number)
                    throw ConfigError("key '" + table_ + "." + key + "' must contain numbers");
                out(static_cast<int>(i), static_cast<int>(j)) = row.array[j].num;
            }
        }
        return out;
    }

    void reject_unknown() const {
        if (!entries_) return;
        for (const auto& [key, value] : *entries_)
            if (!used_.count(key))
                throw ConfigError("unknown key '" + table_ + "." + key + "'");
    }

  private:
    std::string table_;
    const std::map<std::string, TomlValue>* entries_ = nullptr;
    std::set<std::string> used_;
};

std::vector<Monomial> parse_monomials(SectionReader& reader, const std::string& key, int dim) {
    std::vector<Monomial> out;
    const TomlValue* v = reader.find(key);
    if (!v) return out;
    if (v->kind != TomlValue::Kind::array)
        throw ConfigError("key 'model." + key + "' must be an array of [coef, e1..en] rows");
    for (const auto& row : v->array) {
        if (row.kind != TomlValue::Kind::array ||
            static_cast<int>(row.array.size()) != dim + 1)
            throw ConfigError("key 'model." + key + "' rows must be [coef, e1..en]");
        Monomial m;
        m.coef = row.array[0].num;
        for (int j = 0; j < dim; ++j) {
            const double e = row.array[j + 1].num;
            if (e < 0 || e != std::floor(e))
                throw ConfigError("key 'model." + key + "' exponents must be natural numbers");
            m.exponents.push_back(static_cast<int>(e));
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

HamiltonianModel ModelConfig::build() const {
    if (kind == "flat") return make_flat(dim);
    if (kind == "graph_gaussian")
        return make_gaussian_graph_metric(amplitude, sigma, dim, perturbation).to_model();
    if (kind == "ellipsoid") {
        if (semi_axes.size() < 3) throw ConfigError("model.semi_axes must have 3 or 4 entries");
        return make_ellipsoid_constrained(semi_axes).first;
    }
    if (kind == "custom_polynomial")
        return make_polynomial(dim, x_monomials, y_monomials, homogeneity_degree);
    throw ConfigError("unknown model.kind '" + kind + "'");
}

SeparatedBoundary BoundaryConfig::build() const {
    if (kind == "dirichlet") {
        SeparatedBoundary b = dirichlet(x_star, X_star);
        b.mu_entries = mu_entries;
        return b;
    }
    if (kind == "neumann") {
        SeparatedBoundary b = neumann(x_star, X_star);
        b.mu_entries = mu_entries;
        return b;
    }
    if (kind == "robin") {
        SeparatedBoundary b{robin_plane(alpha0, beta0), robin_plane(alpha1, beta1), mu_entries};
        return b;
    }
    if (kind == "custom") {
        SeparatedBoundary b{{near_A, near_B, near_c}, {far_A, far_B, far_c}, mu_entries};
        if (!is_lagrangian(b.near) || !is_lagrangian(b.far))
            throw ConfigError("boundary.custom planes must be Lagrangian (A B^T symmetric)");
        return b;
    }
    throw ConfigError("unknown boundary.kind '" + kind + "'");
}

ExperimentConfig ExperimentConfig::from_document(const TomlDocument& doc,
                                                 const std::string& command) {
    static const std::set<std::string> known_tables = {
        "model", "integrator", "boundary", "solve", "sweep", "locus", "action", "output"};
    for (const auto& [name, table] : doc.tables)
        if (!known_tables.count(name)) throw ConfigError("unknown table '[" + name + "]'");

    ExperimentConfig cfg;

    {
        SectionReader model(doc, "model");
        if (!model.present()) throw ConfigError("missing required table '[model]'");
        cfg.model.kind = model.string("kind", "");
        if (cfg.model.kind.empty()) throw ConfigError("missing required key 'model.kind'");
        cfg.model.dim = model.integer("dim", 2);
        cfg.model.amplitude = model.number("amplitude", 1.0);
        cfg.model.sigma = model.number("sigma", 1.0);
        cfg.model.perturbation = model.number("perturbation", 0.0);
        if (auto v = model.vector("semi_axes")) cfg.model.semi_axes = *v;
        cfg.model.x_monomials = parse_monomials(model, "x_monomials", cfg.model.dim);
        cfg.model.y_monomials = parse_monomials(model, "y_monomials", cfg.model.dim);
        if (model.find("homogeneity_degree"))
            cfg.model.homogeneity_degree = model.number("homogeneity_degree", 0.0);
        model.reject_unknown();
    }
    {
        SectionReader integ(doc, "integrator");
        const std::string scheme = integ.string("scheme", "implicit_midpoint");
        if (scheme == "implicit_midpoint")
            cfg.integrator.scheme = Scheme::implicit_midpoint;
        else if (scheme == "rattle")
            cfg.integrator.scheme = Scheme::rattle;
        else if (scheme == "reference_rk")
            cfg.integrator.scheme = Scheme::reference_rk;
        else
            throw ConfigError("unknown integrator.scheme '" + scheme + "'");
        cfg.integrator.step = integ.number("step", 1e-3);
        if (cfg.integrator.step <= 0) throw ConfigError("integrator.step must be positive");
        cfg.integrator.newton_tol = integ.number("newton_tol", 1e-12);
        if (cfg.integrator.newton_tol <= 0)
            throw ConfigError("integrator.newton_tol must be positive");
        cfg.integrator.newton_max_iter = integ.integer("newton_max_iter", 25);
        cfg.integrator.rk_tol = integ.number("rk_tol", 1e-9);
        integ.reject_unknown();
    }
    {
        SectionReader bd(doc, "boundary");
        if (bd.present()) {
            BoundaryConfig b;
            b.kind = bd.string("kind", "dirichlet");
            if (auto v = bd.vector("x_star")) b.x_star = *v;
            if (auto v = bd.vector("X_star")) b.X_star = *v;
            if (auto v = bd.vector("y_star")) b.x_star = *v;  // neumann aliases
            if (auto v = bd.vector("Y_star")) b.X_star = *v;
            if (auto v = bd.vector("alpha0")) b.alpha0 = *v;
            if (auto v = bd.vector("beta0")) b.beta0 = *v;
            if (auto v = bd.vector("alpha1")) b.alpha1 = *v;
            if (auto v = bd.vector("beta1")) b.beta1 = *v;
            if (auto m = bd.matrix("near_A")) b.near_A = *m;
            if (auto m = bd.matrix("near_B")) b.near_B = *m;
            if (auto v = bd.vector("near_c")) b.near_c = *v;
            if (auto m = bd.matrix("far_A")) b.far_A = *m;
            if (auto m = bd.matrix("far_B")) b.far_B = *m;
            if (auto v = bd.vector("far_c")) b.far_c = *v;
            if (auto v = bd.vector("mu_entries")) {
                for (int i = 0; i < v->size(); ++i)
                    b.mu_entries.push_back(static_cast<int>((*v)(i)));
            }
            cfg.boundary = std::move(b);
            bd.reject_unknown();
        }
    }
    {
        SectionReader sv(doc, "solve");
        if (auto v = sv.vector("u0")) cfg.solve.u0 = *v;
        cfg.solve.tol = sv.number("tol", 1e-10);
        cfg.solve.max_iter = sv.integer("max_iter", 50);
        cfg.solve.multistart = sv.boolean("multistart", false);
        cfg.solve.radius = sv.number("radius", 2.0);
        cfg.solve.count = sv.integer("count", 16);
        cfg.solve.dedup_tol = sv.number("dedup_tol", 1e-6);
        sv.reject_unknown();
    }
    {
        SectionReader sw(doc, "sweep");
        if (const TomlValue* axes = sw.find("axes")) {
            if (axes->kind != TomlValue::Kind::array)
                throw ConfigError("sweep.axes must be an array of [start, stop, count]");
            for (const auto& row : axes->array) {
                if (row.kind != TomlValue::Kind::array || row.array.size() != 3)
                    throw ConfigError("sweep.axes rows must be [start, stop, count]");
                SweepAxis axis;
                axis.start = row.array[0].num;
                axis.stop = row.array[1].num;
                axis.count = static_cast<int>(row.array[2].num);
                cfg.sweep.axes.push_back(axis);
            }
        }
        cfg.sweep.radius = sw.number("radius", 2.0);
        cfg.sweep.count = sw.integer("count", 16);
        cfg.sweep.tol = sw.number("tol", 1e-10);
        cfg.sweep.max_iter = sw.integer("max_iter", 50);
        cfg.sweep.dedup_tol = sw.number("dedup_tol", 1e-6);
        sw.reject_unknown();
    }
    {
        SectionReader lc(doc, "locus");
        if (auto v = lc.vector("base")) cfg.locus.base = *v;
        cfg.locus.grid = lc.integer("grid", 256);
        cfg.locus.t_max = lc.number("t_max", 6.0);
        cfg.locus.cusp_tol = lc.number("cusp_tol", 0.12);
        cfg.locus.n_theta = lc.integer("n_theta", 24);
        cfg.locus.n_phi = lc.integer("n_phi", 48);
        cfg.locus.t_tol = lc.number("t_tol", 1e-8);
        lc.reject_unknown();
    }
    {
        SectionReader ac(doc, "action");
        if (ac.present()) {
            ActionConfig a;
            if (auto m = ac.matrix("exponents"))
                a.exponents = *m;
            else
                throw ConfigError("missing required key 'action.exponents'");
            a.c = ac.number("c", 1.0);
            a.p = ac.number("p", 2.0);
            cfg.action = std::move(a);
            ac.reject_unknown();
        }
    }
    {
        SectionReader out(doc, "output");
        cfg.output_precision = out.integer("precision", 12);
        out.reject_unknown();
    }

    // Per-command requirements.
    if (command == "solve" || command == "sweep") {
        if (!cfg.boundary && cfg.model.kind != "ellipsoid")
            throw ConfigError("command '" + command + "' requires a [boundary] table");
    }
    if (command == "sweep" && cfg.sweep.axes.empty())
        throw ConfigError("command 'sweep' requires 'sweep.axes'");
    if (command == "locus" && cfg.locus.base.size() == 0)
        throw ConfigError("command 'locus' requires 'locus.base'");
    if (command == "symmetry-check" && !cfg.action)
        throw ConfigError("command 'symmetry-check' requires an [action] table");
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path, const std::string& command) {
    return from_document(TomlDocument::parse_file(path), command);
}

}  // namespace conjatlas

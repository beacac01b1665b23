#include "rjump/scenario.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rjump/errors.hpp"
#include "rjump/model.hpp"

namespace rjump {

std::string git_blob_hash(const std::string& content) {
    std::string payload = "blob " + std::to_string(content.size());
    payload.push_back('\0');
    payload += content;

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, payload.data(), payload.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("git_blob_hash: digest failure");
    }
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

namespace {

struct RawEntry {
    std::string value;
    int line = 0;
    mutable bool used = false;
};

struct FileError {
    std::string origin;
    [[noreturn]] void fail(int line, const std::string& message) const {
        throw ScenarioError(origin + ":" + std::to_string(line) + ": " + message);
    }
    [[noreturn]] void fail(const std::string& message) const {
        throw ScenarioError(origin + ": " + message);
    }
};

std::string trim(const std::string& s) {
    auto b = s.begin();
    auto e = s.end();
    while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
    return {b, e};
}

// Cursor over one value string; keeps the key and line for error messages.
struct ValueCursor {
    const std::string& text;
    std::size_t pos = 0;
    const std::string& key;
    int line;
    const FileError& err;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool at_end() {
        skip_ws();
        return pos >= text.size();
    }
    bool peek(char c) {
        skip_ws();
        return pos < text.size() && text[pos] == c;
    }
    void expect(char c, const char* what) {
        skip_ws();
        if (pos >= text.size() || text[pos] != c)
            err.fail(line, key + ": expected " + what + " at position " +
                               std::to_string(pos + 1));
        ++pos;
    }
    double number() {
        skip_ws();
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] != ',' && text[pos] != ']' &&
               !std::isspace(static_cast<unsigned char>(text[pos])))
            ++pos;
        const std::string tok = text.substr(start, pos - start);
        if (tok.empty()) err.fail(line, key + ": expected a number");
        try {
            return parse_double(tok);
        } catch (const std::exception&) {
            err.fail(line, key + ": bad number '" + tok + "'");
        }
    }
    // A bare word (poly / switch / a catalog name).
    std::string word() {
        skip_ws();
        const std::size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
               text[pos] != '[')
            ++pos;
        return text.substr(start, pos - start);
    }

    std::vector<double> row() {
        expect('[', "'['");
        std::vector<double> vals;
        if (!peek(']')) {
            while (true) {
                vals.push_back(number());
                if (peek(',')) {
                    ++pos;
                    continue;
                }
                break;
            }
        }
        expect(']', "']'");
        return vals;
    }

    Matrix matrix() {
        expect('[', "'[' opening the row list");
        std::vector<std::vector<double>> rows;
        if (!peek(']')) {
            while (true) {
                rows.push_back(row());
                if (peek(',')) {
                    ++pos;
                    continue;
                }
                break;
            }
        }
        expect(']', "']' closing the row list");
        if (rows.empty()) err.fail(line, key + ": empty matrix");
        const std::size_t cols = rows.front().size();
        for (const auto& r : rows)
            if (r.size() != cols) err.fail(line, key + ": ragged matrix rows");
        if (cols == 0) err.fail(line, key + ": empty matrix rows");
        Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < cols; ++c)
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        return out;
    }

    void done() {
        if (!at_end())
            err.fail(line, key + ": trailing characters '" + text.substr(pos) + "'");
    }
};

struct Parsed {
    std::map<std::string, RawEntry> entries;
    FileError err;

    const RawEntry* find(const std::string& key) const {
        auto it = entries.find(key);
        if (it == entries.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    }
    const RawEntry& require(const std::string& key) const {
        const RawEntry* e = find(key);
        if (e == nullptr) err.fail("missing required key '" + key + "'");
        return *e;
    }

    Matrix matrix(const std::string& key) const {
        const RawEntry& e = require(key);
        ValueCursor cur{e.value, 0, key, e.line, err};
        Matrix m = cur.matrix();
        cur.done();
        return m;
    }
    double scalar(const std::string& key) const {
        const RawEntry& e = require(key);
        try {
            return parse_double(trim(e.value));
        } catch (const std::exception&) {
            err.fail(e.line, key + ": bad number '" + e.value + "'");
        }
    }
    long integer(const std::string& key) const {
        const double v = scalar(key);
        const auto r = static_cast<long>(v);
        if (static_cast<double>(r) != v)
            err.fail(entries.at(key).line, key + ": expected an integer");
        return r;
    }

    Coefficient coefficient(const std::string& key, int rows, int cols) const {
        const RawEntry& e = require(key);
        ValueCursor cur{e.value, 0, key, e.line, err};
        auto shaped = [&](const Matrix& m) {
            if (m.rows() != rows || m.cols() != cols)
                err.fail(e.line, key + ": expected a " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + " matrix, got " +
                                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
            return m;
        };
        if (cur.peek('[')) {
            Matrix m = shaped(cur.matrix());
            cur.done();
            return Coefficient::constant(std::move(m));
        }
        const std::string form = cur.word();
        if (form == "poly") {
            std::vector<Matrix> powers;
            while (!cur.at_end()) powers.push_back(shaped(cur.matrix()));
            if (powers.empty()) err.fail(e.line, key + ": poly needs at least one matrix");
            return Coefficient::polynomial(std::move(powers));
        }
        if (form == "switch") {
            const std::string name = cur.word();
            const auto kind = path_switch_from_string(name);
            if (!kind)
                err.fail(e.line, key + ": unknown path functional '" + name +
                                     "' (catalog: sign-of-first-brownian-step, after-first-jump)");
            Matrix primary = shaped(cur.matrix());
            Matrix secondary = shaped(cur.matrix());
            cur.done();
            return Coefficient::path_switch(*kind, std::move(primary), std::move(secondary));
        }
        err.fail(e.line, key + ": expected a matrix, 'poly ...' or 'switch ...', got '" + form +
                             "'");
    }
};

Parsed split_lines(const std::string& text, const std::string& origin) {
    Parsed p;
    p.err.origin = origin;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string stripped = trim(raw);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            p.err.fail(line, "expected 'key = value', got '" + stripped + "'");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) p.err.fail(line, "empty key");
        if (value.empty()) p.err.fail(line, "key '" + key + "' has no value");
        auto [it, inserted] = p.entries.emplace(key, RawEntry{value, line, false});
        if (!inserted)
            p.err.fail(line, "duplicate key '" + key + "' (first at line " +
                                 std::to_string(it->second.line) + ")");
    }
    return p;
}

// Mark ids in file order of their first mention.
std::vector<std::string> mark_ids(const Parsed& p) {
    std::vector<std::pair<int, std::string>> found;
    for (const auto& [key, entry] : p.entries) {
        if (key.rfind("mark.", 0) != 0) continue;
        const std::size_t dot = key.find('.', 5);
        if (dot == std::string::npos || dot == 5)
            p.err.fail(entry.line, "bad mark key '" + key + "', want mark.<id>.<field>");
        const std::string id = key.substr(5, dot - 5);
        bool seen = false;
        for (auto& [ln, known] : found)
            if (known == id) {
                ln = std::min(ln, entry.line);
                seen = true;
            }
        if (!seen) found.emplace_back(entry.line, id);
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> ids;
    ids.reserve(found.size());
    for (auto& [ln, id] : found) ids.push_back(std::move(id));
    return ids;
}

// Replaces every path-functional coefficient by its constant value under one
// (sign, jump) variant pair, so the deterministic validator applies.
CoefficientSet freeze_variant(const CoefficientSet& c, int sv, int jv) {
    CoefficientSet out = c;
    auto freeze = [&](Coefficient& coeff) {
        if (!coeff.path_dependent()) return;
        const PathFunctional& pf = coeff.path();
        const int v = pf.kind == PathSwitchKind::SignOfFirstBrownianStep ? sv : jv;
        coeff = Coefficient::constant(pf.value(v));
    };
    freeze(out.A);
    freeze(out.B);
    freeze(out.Q);
    freeze(out.N);
    for (auto& c_i : out.C) freeze(c_i);
    for (auto& d_i : out.D) freeze(d_i);
    for (auto& e_e : out.E) freeze(e_e);
    for (auto& f_e : out.F) freeze(f_e);
    return out;
}

}  // namespace

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
    Parsed p = split_lines(text, origin);

    Scenario sc;
    sc.source_text = text;
    sc.content_hash = git_blob_hash(text);
    {
        const RawEntry* nm = p.find("name");
        sc.name = nm != nullptr ? trim(nm->value) : origin;
    }

    CoefficientSet& c = sc.coeffs;
    c.n = static_cast<int>(p.integer("n"));
    c.m = static_cast<int>(p.integer("m"));
    c.d = static_cast<int>(p.integer("d"));
    if (c.n < 1 || c.m < 1 || c.d < 0)
        p.err.fail("dimensions must satisfy n >= 1, m >= 1, d >= 0");
    c.horizon = p.scalar("T");
    if (!(c.horizon > 0.0)) p.err.fail("T must be positive");
    c.delta = p.scalar("delta");
    if (!(c.delta > 0.0)) p.err.fail("delta must be positive");
    if (const RawEntry* b = p.find("bound")) {
        (void)b;
        c.bound = p.scalar("bound");
        if (!(c.bound > 0.0)) p.err.fail("bound must be positive");
    }

    c.A = p.coefficient("A", c.n, c.n);
    c.B = p.coefficient("B", c.n, c.m);
    c.Q = p.coefficient("Q", c.n, c.n);
    c.N = p.coefficient("N", c.m, c.m);
    for (int i = 1; i <= c.d; ++i) {
        c.C.push_back(p.coefficient("C." + std::to_string(i), c.n, c.n));
        c.D.push_back(p.coefficient("D." + std::to_string(i), c.n, c.m));
    }
    c.M = p.matrix("M");
    if (c.M.rows() != c.n || c.M.cols() != c.n)
        p.err.fail("M: expected a " + std::to_string(c.n) + "x" + std::to_string(c.n) +
                   " matrix");

    const std::vector<std::string> ids = mark_ids(p);
    std::vector<double> weights;
    for (const std::string& id : ids) {
        const std::string base = "mark." + id + ".";
        const RawEntry& w = p.require(base + "weight");
        const double weight = p.scalar(base + "weight");
        if (!(weight > 0.0))
            p.err.fail(w.line, "mark " + id + ": weight must be positive, got " +
                                   format_double(weight));
        weights.push_back(weight);
        c.E.push_back(p.coefficient(base + "E", c.n, c.n));
        c.F.push_back(p.coefficient(base + "F", c.n, c.m));
    }
    c.marks = MarkMeasure(ids, weights);

    if (const RawEntry* x = p.find("x0")) {
        ValueCursor cur{x->value, 0, "x0", x->line, p.err};
        std::vector<double> vals = cur.row();
        cur.done();
        if (static_cast<int>(vals.size()) != c.n)
            p.err.fail(x->line, "x0: expected " + std::to_string(c.n) + " entries");
        sc.x0 = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    } else {
        sc.x0 = Vector::Ones(c.n);
    }

    if (p.find("dt") != nullptr) {
        sc.dt = p.scalar("dt");
        if (!(sc.dt > 0.0)) p.err.fail("dt must be positive");
    }
    if (p.find("paths") != nullptr) {
        sc.paths = p.integer("paths");
        if (sc.paths < 1) p.err.fail("paths must be >= 1");
    }
    if (p.find("seed") != nullptr)
        sc.seed = static_cast<std::uint64_t>(p.integer("seed"));
    if (p.find("nt") != nullptr) {
        sc.nt = static_cast<int>(p.integer("nt"));
        if (sc.nt < 1) p.err.fail("nt must be >= 1");
    }
    if (p.find("riccati_steps") != nullptr) {
        sc.riccati_steps = static_cast<int>(p.integer("riccati_steps"));
        if (sc.riccati_steps < 1) p.err.fail("riccati_steps must be >= 1");
    }

    for (const auto& [key, entry] : p.entries)
        if (!entry.used) p.err.fail(entry.line, "unknown key '" + key + "'");

    try {
        c.check_shape();
    } catch (const std::exception& ex) {
        p.err.fail(ex.what());
    }
    if (c.path_dependent()) {
        for (int sv = 0; sv < 2; ++sv)
            for (int jv = 0; jv < 2; ++jv) {
                ValidationReport rep = validate_assumptions(freeze_variant(c, sv, jv));
                if (!rep.ok())
                    p.err.fail("variant (sign=" + std::to_string(sv) + ", jump=" +
                               std::to_string(jv) + "): " + rep.summary());
            }
    } else {
        ValidationReport rep = validate_assumptions(c);
        if (!rep.ok()) p.err.fail(rep.summary());
    }
    return sc;
}

Scenario parse_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string name = path;
    const std::size_t slash = name.find_last_of('/');
    if (slash != std::string::npos) name.erase(0, slash + 1);
    const std::size_t ext = name.rfind(".scen");
    if (ext != std::string::npos && ext == name.size() - 5) name.erase(ext);
    return parse_scenario_text(buf.str(), name);
}

}  // namespace rjump

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <complex>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridscreen/common.hpp"
#include "json.hpp"

namespace gridscreen {

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;  // external bus number
    BusKind kind = BusKind::PQ;
    double pd = 0.0;       // MW
    double qd = 0.0;       // MVar
    double gs = 0.0;       // MW shunt at V=1 pu
    double bs = 0.0;       // MVar shunt at V=1 pu
    double vm = 1.0;       // pu
    double va = 0.0;       // degrees
    double base_kv = 0.0;  // kV
};

struct Generator {
    int bus = 0;  // external bus id
    double pg = 0.0;
    double qg = 0.0;
    double vg = 1.0;
    bool status = true;
};

struct Branch {
    int from = 0;  // external bus ids
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double tap = 1.0;
    bool status = true;
};

struct ConnectionMatrix {
    int n = 0;
    Eigen::MatrixXi c;
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------
struct MissingSection : GridscreenError {
    explicit MissingSection(const std::string& what) : GridscreenError("missing section: " + what) {}
};
struct MalformedRow : GridscreenError {
    int line;
    MalformedRow(int line_no, const std::string& what)
        : GridscreenError("malformed row at line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};
struct NoSlackBus : GridscreenError {
    NoSlackBus() : GridscreenError("case has no slack bus") {}
};
struct DuplicateBusId : GridscreenError {
    explicit DuplicateBusId(int id) : GridscreenError("duplicate bus id " + std::to_string(id)) {}
};
struct CaseValidationError : GridscreenError {
    using GridscreenError::GridscreenError;
};
struct IndexOutOfRange : GridscreenError {
    using GridscreenError::GridscreenError;
};
struct AlreadyOut : GridscreenError {
    using GridscreenError::GridscreenError;
};

// ---------------------------------------------------------------------------
// NetworkCase
// ---------------------------------------------------------------------------
struct NetworkCase {
    double base_mva = 100.0;
    std::string name;
    std::vector<Bus> buses;       // internal index = position
    std::vector<Generator> gens;
    std::vector<Branch> branches;

    int n() const { return static_cast<int>(buses.size()); }

    int bus_index(int external_id) const {
        for (int i = 0; i < n(); ++i)
            if (buses[i].id == external_id) return i;
        throw IndexOutOfRange("unknown bus id " + std::to_string(external_id));
    }

    int slack_index() const {
        for (int i = 0; i < n(); ++i)
            if (buses[i].kind == BusKind::Slack) return i;
        throw NoSlackBus();
    }

    std::vector<int> pv_indices() const {
        std::vector<int> out;
        for (int i = 0; i < n(); ++i)
            if (buses[i].kind == BusKind::PV) out.push_back(i);
        return out;
    }

    std::vector<int> pq_indices() const {
        std::vector<int> out;
        for (int i = 0; i < n(); ++i)
            if (buses[i].kind == BusKind::PQ) out.push_back(i);
        return out;
    }

    int in_service_branch_count() const {
        return static_cast<int>(std::count_if(branches.begin(), branches.end(),
                                              [](const Branch& b) { return b.status; }));
    }
};

inline void validate_case(const NetworkCase& c) {
    int slack = 0;
    std::unordered_map<int, int> seen;
    for (const Bus& b : c.buses) {
        if (b.kind == BusKind::Slack) ++slack;
        if (!seen.emplace(b.id, 1).second) throw DuplicateBusId(b.id);
        if (!(b.vm > 0.0)) throw CaseValidationError("bus " + std::to_string(b.id) + " has non-positive Vm");
    }
    if (slack == 0) throw NoSlackBus();
    if (slack > 1) throw CaseValidationError("case has more than one slack bus");
    for (const Generator& g : c.gens) {
        if (!seen.count(g.bus)) throw CaseValidationError("generator at unknown bus " + std::to_string(g.bus));
    }
    for (const Branch& b : c.branches) {
        if (!seen.count(b.from) || !seen.count(b.to))
            throw CaseValidationError("branch endpoint does not resolve");
        if (b.from == b.to) throw CaseValidationError("branch with identical endpoints");
        if (!(b.tap > 0.0)) throw CaseValidationError("branch with non-positive tap");
    }
}

// ---------------------------------------------------------------------------
// MATPOWER .m parsing
// ---------------------------------------------------------------------------
namespace detail {

inline std::string strip_comment(const std::string& line) {
    auto pos = line.find('%');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

struct RawMatrix {
    std::vector<std::vector<double>> rows;
    std::vector<int> row_lines;  // source line of each row
};

struct RawCase {
    std::optional<double> base_mva;
    std::optional<RawMatrix> bus, gen, branch;
    std::string name;
};

inline RawCase scan_matpower(const std::string& text) {
    RawCase out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;

    std::string pending_field;  // matrix currently being read
    RawMatrix current;
    std::vector<double> row;
    int row_start_line = 0;

    auto flush_matrix = [&](const std::string& field) {
        if (field == "bus") out.bus = current;
        else if (field == "gen") out.gen = current;
        else if (field == "branch") out.branch = current;
        current = RawMatrix{};
    };

    while (std::getline(in, line)) {
        ++line_no;
        std::string body = strip_comment(line);
        std::size_t i = 0;
        auto skip_ws = [&] { while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i; };

        if (pending_field.empty()) {
            // look for "<ident>.<field> = ..." or "function <ident> = <name>"
            skip_ws();
            if (i >= body.size()) continue;
            if (body.compare(i, 9, "function ") == 0) {
                auto eq = body.find('=', i);
                if (eq != std::string::npos) {
                    std::string rhs = body.substr(eq + 1);
                    std::istringstream rs(rhs);
                    rs >> out.name;
                }
                continue;
            }
            auto dot = body.find('.', i);
            if (dot == std::string::npos) continue;
            std::size_t f = dot + 1;
            std::size_t fe = f;
            while (fe < body.size() && (std::isalnum(static_cast<unsigned char>(body[fe])) || body[fe] == '_')) ++fe;
            std::string field = body.substr(f, fe - f);
            i = fe;
            skip_ws();
            if (i >= body.size() || body[i] != '=') continue;
            ++i;
            skip_ws();
            if (field == "baseMVA") {
                try {
                    out.base_mva = std::stod(body.substr(i));
                } catch (const std::exception&) {
                    throw MalformedRow(line_no, "unreadable baseMVA");
                }
                continue;
            }
            if (field != "bus" && field != "gen" && field != "branch") continue;
            if (i >= body.size() || body[i] != '[') throw MalformedRow(line_no, "expected '[' after " + field);
            ++i;
            pending_field = field;
            row.clear();
            row_start_line = line_no;
            // fall through to matrix token scan on the remainder of this line
        }

        // inside a matrix: read numbers, ';' row separators, ']' terminator
        while (i < body.size()) {
            char ch = body[i];
            if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
                ++i;
                continue;
            }
            if (ch == ';') {
                if (!row.empty()) {
                    current.rows.push_back(row);
                    current.row_lines.push_back(row_start_line);
                    row.clear();
                }
                ++i;
                row_start_line = line_no;
                continue;
            }
            if (ch == ']') {
                if (!row.empty()) {
                    current.rows.push_back(row);
                    current.row_lines.push_back(row_start_line);
                    row.clear();
                }
                flush_matrix(pending_field);
                pending_field.clear();
                ++i;
                // ignore anything after ']' on this line (normally ';')
                i = body.size();
                continue;
            }
            char* endp = nullptr;
            const char* start = body.c_str() + i;
            double v = std::strtod(start, &endp);
            if (endp == start) throw MalformedRow(line_no, "unreadable token '" + std::string(1, ch) + "'");
            if (row.empty()) row_start_line = line_no;
            row.push_back(v);
            i += static_cast<std::size_t>(endp - start);
        }
        if (pending_field.empty()) continue;
        // newline also terminates a row when data is laid out one row per line
        if (!row.empty()) {
            current.rows.push_back(row);
            current.row_lines.push_back(row_start_line);
            row.clear();
        }
    }
    if (!pending_field.empty()) throw MissingSection("unterminated " + pending_field + " matrix");
    return out;
}

}  // namespace detail

inline NetworkCase parse_matpower_case(const std::string& text) {
    detail::RawCase raw = detail::scan_matpower(text);
    if (!raw.base_mva) throw MissingSection("baseMVA");
    if (!raw.bus) throw MissingSection("bus");
    if (!raw.gen) throw MissingSection("gen");
    if (!raw.branch) throw MissingSection("branch");

    NetworkCase c;
    c.base_mva = *raw.base_mva;
    c.name = raw.name;

    for (std::size_t k = 0; k < raw.bus->rows.size(); ++k) {
        const auto& r = raw.bus->rows[k];
        if (r.size() < 10) throw MalformedRow(raw.bus->row_lines[k], "bus row needs at least 10 columns");
        Bus b;
        b.id = static_cast<int>(r[0]);
        const int type = static_cast<int>(r[1]);
        switch (type) {
            case 1: b.kind = BusKind::PQ; break;
            case 2: b.kind = BusKind::PV; break;
            case 3: b.kind = BusKind::Slack; break;
            default: throw MalformedRow(raw.bus->row_lines[k], "unknown bus type " + std::to_string(type));
        }
        b.pd = r[2];
        b.qd = r[3];
        b.gs = r[4];
        b.bs = r[5];
        b.vm = r[7];
        b.va = r[8];
        b.base_kv = r[9];
        c.buses.push_back(b);
    }

    for (std::size_t k = 0; k < raw.gen->rows.size(); ++k) {
        const auto& r = raw.gen->rows[k];
        if (r.size() < 8) throw MalformedRow(raw.gen->row_lines[k], "gen row needs at least 8 columns");
        Generator g;
        g.bus = static_cast<int>(r[0]);
        g.pg = r[1];
        g.qg = r[2];
        g.vg = r[5];
        g.status = r[7] > 0.0;
        c.gens.push_back(g);
    }

    for (std::size_t k = 0; k < raw.branch->rows.size(); ++k) {
        const auto& r = raw.branch->rows[k];
        if (r.size() < 11) throw MalformedRow(raw.branch->row_lines[k], "branch row needs at least 11 columns");
        Branch b;
        b.from = static_cast<int>(r[0]);
        b.to = static_cast<int>(r[1]);
        b.r = r[2];
        b.x = r[3];
        b.b_charging = r[4];
        b.tap = r[8] == 0.0 ? 1.0 : r[8];  // MATPOWER uses 0 for "no transformer"
        b.status = r[10] > 0.0;
        c.branches.push_back(b);
    }

    validate_case(c);
    return c;
}

inline NetworkCase case_from_json(const nlohmann::json& j);

inline NetworkCase load_case_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GridscreenError("cannot open case file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    NetworkCase c = path.size() > 5 && path.substr(path.size() - 5) == ".json"
                        ? case_from_json(nlohmann::json::parse(ss.str()))
                        : parse_matpower_case(ss.str());
    if (c.name.empty()) c.name = path;
    return c;
}

// ---------------------------------------------------------------------------
// JSON dump (canonical fixture format)
// ---------------------------------------------------------------------------
inline nlohmann::json case_to_json(const NetworkCase& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["base_mva"] = c.base_mva;
    j["buses"] = nlohmann::json::array();
    for (const Bus& b : c.buses) {
        j["buses"].push_back({{"id", b.id},
                              {"kind", b.kind == BusKind::Slack ? "slack" : (b.kind == BusKind::PV ? "pv" : "pq")},
                              {"pd", b.pd},
                              {"qd", b.qd},
                              {"gs", b.gs},
                              {"bs", b.bs},
                              {"vm", b.vm},
                              {"va", b.va},
                              {"base_kv", b.base_kv}});
    }
    j["gens"] = nlohmann::json::array();
    for (const Generator& g : c.gens)
        j["gens"].push_back({{"bus", g.bus}, {"pg", g.pg}, {"qg", g.qg}, {"vg", g.vg}, {"status", g.status}});
    j["branches"] = nlohmann::json::array();
    for (const Branch& b : c.branches)
        j["branches"].push_back({{"from", b.from},
                                 {"to", b.to},
                                 {"r", b.r},
                                 {"x", b.x},
                                 {"b_charging", b.b_charging},
                                 {"tap", b.tap},
                                 {"status", b.status}});
    return j;
}

inline NetworkCase case_from_json(const nlohmann::json& j) {
    NetworkCase c;
    c.name = j.value("name", std::string{});
    c.base_mva = j.at("base_mva").get<double>();
    for (const auto& jb : j.at("buses")) {
        Bus b;
        b.id = jb.at("id").get<int>();
        const std::string kind = jb.at("kind").get<std::string>();
        b.kind = kind == "slack" ? BusKind::Slack : (kind == "pv" ? BusKind::PV : BusKind::PQ);
        b.pd = jb.at("pd").get<double>();
        b.qd = jb.at("qd").get<double>();
        b.gs = jb.at("gs").get<double>();
        b.bs = jb.at("bs").get<double>();
        b.vm = jb.at("vm").get<double>();
        b.va = jb.at("va").get<double>();
        b.base_kv = jb.at("base_kv").get<double>();
        c.buses.push_back(b);
    }
    for (const auto& jg : j.at("gens")) {
        Generator g;
        g.bus = jg.at("bus").get<int>();
        g.pg = jg.at("pg").get<double>();
        g.qg = jg.at("qg").get<double>();
        g.vg = jg.at("vg").get<double>();
        g.status = jg.at("status").get<bool>();
        c.gens.push_back(g);
    }
    for (const auto& jb : j.at("branches")) {
        Branch b;
        b.from = jb.at("from").get<int>();
        b.to = jb.at("to").get<int>();
        b.r = jb.at("r").get<double>();
        b.x = jb.at("x").get<double>();
        b.b_charging = jb.at("b_charging").get<double>();
        b.tap = jb.at("tap").get<double>();
        b.status = jb.at("status").get<bool>();
        c.branches.push_back(b);
    }
    validate_case(c);
    return c;
}

// ---------------------------------------------------------------------------
// Matrices and topology
// ---------------------------------------------------------------------------

// Standard pi-model bus admittance matrix. Off-diagonals of disconnected
// pairs are exact zeros (never written to).
inline Eigen::MatrixXcd build_ybus(const NetworkCase& c) {
    const int n = c.n();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const Branch& br : c.branches) {
        if (!br.status) continue;
        const int f = c.bus_index(br.from);
        const int t = c.bus_index(br.to);
        const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> bc(0.0, br.b_charging / 2.0);
        const double tap = br.tap;
        y(f, f) += (ys + bc) / (tap * tap);
        y(t, t) += ys + bc;
        y(f, t) += -ys / tap;
        y(t, f) += -ys / tap;
    }
    for (int i = 0; i < n; ++i)
        y(i, i) += std::complex<double>(c.buses[i].gs, c.buses[i].bs) / c.base_mva;
    return y;
}

inline ConnectionMatrix connection_matrix(const NetworkCase& c) {
    ConnectionMatrix cm;
    cm.n = c.n();
    cm.c = Eigen::MatrixXi::Zero(cm.n, cm.n);
    for (const Branch& br : c.branches) {
        if (!br.status) continue;
        const int f = c.bus_index(br.from);
        const int t = c.bus_index(br.to);
        cm.c(f, t) = 1;
        cm.c(t, f) = 1;
    }
    return cm;
}

inline NetworkCase apply_outage(const NetworkCase& c, int branch_index) {
    if (branch_index < 0 || branch_index >= static_cast<int>(c.branches.size()))
        throw IndexOutOfRange("branch index " + std::to_string(branch_index) + " out of range");
    if (!c.branches[branch_index].status)
        throw AlreadyOut("branch " + std::to_string(branch_index) + " is already out of service");
    NetworkCase out = c;
    out.branches[branch_index].status = false;
    return out;
}

inline bool is_connected(const NetworkCase& c) {
    const int n = c.n();
    if (n == 0) return true;
    std::vector<std::vector<int>> adj(n);
    for (const Branch& br : c.branches) {
        if (!br.status) continue;
        const int f = c.bus_index(br.from);
        const int t = c.bus_index(br.to);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                stack.push_back(v);
            }
        }
    }
    return count == n;
}

}  // namespace gridscreen

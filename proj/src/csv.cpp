#include "prodexp/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace prodexp {

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_record(std::istream& in, bool& got) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    got = false;
    char c;
    while (in.get(c)) {
        got = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    cur.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else if (c == '\n') {
            break;
        } else {
            cur.push_back(c);
        }
    }
    if (got) fields.push_back(trim(cur));
    return fields;
}

bool blank(const std::vector<std::string>& f) {
    for (const auto& s : f)
        if (!s.empty()) return false;
    return true;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    bool got = false;
    t.header = split_record(in, got);
    if (!got) throw DataError("empty_csv", "csv: missing header row");
    for (;;) {
        auto rec = split_record(in, got);
        if (!got) break;
        if (blank(rec)) continue;
        rec.resize(t.header.size());
        t.rows.push_back(std::move(rec));
    }
    return t;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out << '"';
            for (char c : f) {
                if (c == '"') out << '"';
                out << c;
            }
            out << '"';
        } else {
            out << f;
        }
    }
    out << '\n';
}

namespace {

const std::vector<std::string> kPanelColumns = {
    "firm_id",         "year",        "output",          "labor",       "capital",
    "materials",       "investment",  "belief_mu_y",     "belief_sigma2_y",
    "belief_mu_l",     "belief_sigma2_l", "belief_mu_m", "belief_sigma2_m", "mgmt"};

enum class Cell { Missing, Ok, Bad };

Cell parse_num(const std::string& s, double& v) {
    if (s.empty()) return Cell::Missing;
    try {
        std::size_t pos = 0;
        v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) return Cell::Bad;
    } catch (const std::exception&) {
        return Cell::Bad;
    }
    return Cell::Ok;
}

}  // namespace

PanelLoad read_panel_csv(std::istream& in) {
    CsvTable t = read_csv(in);
    std::vector<int> col;
    for (const auto& name : kPanelColumns) {
        const int c = t.column(name);
        if (c < 0 && (name == "firm_id" || name == "year" || name == "output" ||
                      name == "labor" || name == "capital"))
            throw DataError("missing_column", "csv: required column '" + name + "' not found");
        col.push_back(c);
    }
    auto cell = [&](const std::vector<std::string>& r, std::size_t which) -> const std::string& {
        static const std::string empty;
        return col[which] < 0 ? empty : r[static_cast<std::size_t>(col[which])];
    };

    PanelLoad out;
    std::vector<FirmYear> rows;
    for (const auto& r : t.rows) {
        FirmYear fy;
        fy.firm_id = cell(r, 0);
        double v = 0;
        if (fy.firm_id.empty()) {
            ++out.rejected["missing_firm_id"];
            continue;
        }
        if (parse_num(cell(r, 1), v) != Cell::Ok || v != std::floor(v)) {
            ++out.rejected["bad_year"];
            continue;
        }
        fy.year = static_cast<int>(v);

        // Level columns: output, labor, capital required; materials, investment optional.
        static const char* level_names[] = {"output", "labor", "capital", "materials", "investment"};
        bool reject = false;
        double logs[5];
        bool present[5] = {false, false, false, false, false};
        for (std::size_t j = 0; j < 5 && !reject; ++j) {
            Cell st = parse_num(cell(r, 2 + j), v);
            if (st == Cell::Missing) {
                if (j < 3) {
                    ++out.rejected[std::string("missing_") + level_names[j]];
                    reject = true;
                }
                continue;
            }
            if (st == Cell::Bad) {
                ++out.rejected[std::string("unparseable_") + level_names[j]];
                reject = true;
            } else if (v <= 0.0) {
                // Zero materials or investment leaves the proxy absent; estimators that need it drop the row.
                if (j < 3) {
                    ++out.rejected[std::string("nonpositive_") + level_names[j]];
                    reject = true;
                }
            } else {
                logs[j] = std::log(v);
                present[j] = true;
            }
        }
        if (reject) continue;
        fy.y = logs[0];
        fy.l = logs[1];
        fy.k = logs[2];
        if (present[3]) fy.m = logs[3];
        if (present[4]) fy.inv = logs[4];

        static const char* bvars[] = {"y", "l", "m"};
        for (std::size_t b = 0; b < 3 && !reject; ++b) {
            double mu = 0, s2 = 0;
            Cell a = parse_num(cell(r, 7 + 2 * b), mu);
            Cell c = parse_num(cell(r, 8 + 2 * b), s2);
            if (a == Cell::Missing && c == Cell::Missing) continue;
            if (a != Cell::Ok || c != Cell::Ok || s2 < 0.0) {
                ++out.rejected[std::string("bad_belief_") + bvars[b]];
                reject = true;
                continue;
            }
            fy.beliefs[bvars[b]] = BeliefDistribution{mu, s2, std::nullopt};
        }
        if (reject) continue;
        Cell mg = parse_num(cell(r, 13), v);
        if (mg == Cell::Bad) {
            ++out.rejected["unparseable_mgmt"];
            continue;
        }
        if (mg == Cell::Ok) fy.aux["mgmt"] = v;
        rows.push_back(std::move(fy));
    }
    out.panel = Panel(std::move(rows));
    return out;
}

PanelLoad read_panel_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("io", "cannot open " + path);
    return read_panel_csv(in);
}

void write_panel_csv(std::ostream& out, const Panel& panel) {
    write_csv_row(out, kPanelColumns);
    auto lvl = [](const std::optional<double>& v) { return v ? format_double(std::exp(*v)) : ""; };
    for (const auto& r : panel.rows()) {
        std::vector<std::string> f;
        f.push_back(r.firm_id);
        f.push_back(std::to_string(r.year));
        f.push_back(format_double(std::exp(r.y)));
        f.push_back(format_double(std::exp(r.l)));
        f.push_back(format_double(std::exp(r.k)));
        f.push_back(lvl(r.m));
        f.push_back(lvl(r.inv));
        for (const char* v : {"y", "l", "m"}) {
            const BeliefDistribution* b = r.belief(v);
            f.push_back(b ? format_double(b->mu) : "");
            f.push_back(b ? format_double(b->sigma2) : "");
        }
        auto mg = r.aux_value("mgmt");
        f.push_back(mg ? format_double(*mg) : "");
        write_csv_row(out, f);
    }
}

}  // namespace prodexp

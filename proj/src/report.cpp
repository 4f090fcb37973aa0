#include "quicklap/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "quicklap/experiment.hpp"

namespace quicklap {

namespace {

struct Cell {
    double mean = 0.0;
    double sem = 0.0;
    std::size_t n = 0;
};

// Row/column labels in first-seen order plus cell values.
struct Table {
    std::string corner;
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::map<std::pair<std::string, std::string>, Cell> cells;

    void add(const std::string& row, const std::string& col, Cell c) {
        if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
        if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
        cells[{row, col}] = c;
    }
};

std::string cell_text(const Cell& c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f ± %.4f", c.mean, c.sem);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

Table read_summary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "scenario,algorithm,mean_nmse,sem,n") {
        throw std::runtime_error(path.string() + ": unexpected header");
    }
    Table t;
    t.corner = "Scenario";
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
        try {
            t.add(f[0], f[1], Cell{std::stod(f[2]), std::stod(f[3]), static_cast<std::size_t>(std::stoul(f[4]))});
        } catch (const std::logic_error&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed number");
        }
    }
    if (t.rows.empty()) throw std::runtime_error(path.string() + ": no result rows");
    return t;
}

Table read_utterances(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing " + path.string());
    std::map<std::pair<std::string, std::string>, std::vector<double>> values;
    Table order;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!j.at("error").is_null()) continue;
            const auto u = j.at("utterance").get<std::string>();
            const auto a = j.at("algorithm").get<std::string>();
            order.add(u, a, {});
            values[{u, a}].push_back(j.at("final_nmse").get<double>());
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    Table t;
    t.corner = "Utterance";
    for (const auto& u : order.rows) {
        for (const auto& a : order.cols) {
            const auto it = values.find({u, a});
            if (it == values.end()) continue;
            const auto [m, se] = mean_sem(it->second);
            t.add(u, a, Cell{m, se, it->second.size()});
        }
    }
    return t;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

void render(std::ostringstream& out, const Table& t, ReportFormat format) {
    if (format == ReportFormat::markdown) {
        out << "| " << t.corner << " |";
        for (const auto& c : t.cols) out << ' ' << c << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < t.cols.size(); ++i) out << "---|";
        out << '\n';
        for (const auto& r : t.rows) {
            out << "| " << r << " |";
            for (const auto& c : t.cols) {
                const auto it = t.cells.find({r, c});
                out << ' ' << (it == t.cells.end() ? std::string("-") : cell_text(it->second)) << " |";
            }
            out << '\n';
        }
    } else {
        out << csv_quote(t.corner);
        for (const auto& c : t.cols) out << ',' << c << "_mean," << c << "_sem";
        out << '\n';
        for (const auto& r : t.rows) {
            out << csv_quote(r);
            for (const auto& c : t.cols) {
                const auto it = t.cells.find({r, c});
                if (it == t.cells.end()) {
                    out << ",,";
                } else {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, ",%.8f,%.8f", it->second.mean, it->second.sem);
                    out << buf;
                }
            }
            out << '\n';
        }
    }
}

}  // namespace

ReportFormat report_format_from_name(std::string_view name) {
    if (name == "markdown") return ReportFormat::markdown;
    if (name == "csv") return ReportFormat::csv;
    throw std::invalid_argument("unknown report format '" + std::string(name) + "' (expected markdown or csv)");
}

std::string render_report(const std::filesystem::path& dir, ReportFormat format) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a results directory: " + dir.string());
    const Table scenarios = read_summary(dir / "summary.csv");
    const Table utterances = read_utterances(dir / "episodes.jsonl");
    std::ostringstream out;
    if (format == ReportFormat::markdown) out << "Final NMSE by scenario (mean ± SEM)\n\n";
    render(out, scenarios, format);
    out << '\n';
    if (format == ReportFormat::markdown) out << "Final NMSE by utterance (mean ± SEM)\n\n";
    render(out, utterances, format);
    return out.str();
}

}  // namespace quicklap

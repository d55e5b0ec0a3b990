#include "mxfar/panel_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mxfar/error.hpp"

namespace mxfar {

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string ValidationReport::format(std::size_t max_entries) const {
    std::ostringstream os;
    const std::size_t shown = std::min(max_entries, violations.size());
    for (std::size_t i = 0; i < shown; ++i) {
        const auto& v = violations[i];
        os << source;
        if (v.line > 0) os << ':' << v.line;
        os << ": ";
        if (!v.subject.empty()) os << "subject " << v.subject << ": ";
        os << v.message << '\n';
    }
    if (violations.size() > shown) os << "... and " << violations.size() - shown << " more violations\n";
    return os.str();
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
bool parse(std::string_view s, T& value) {
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_value(std::string_view s, double& value) {
    if (parse(s, value)) return true;
    // from_chars does not accept a leading '+'
    return s.size() > 1 && s.front() == '+' && s[1] != '-' && parse(s.substr(1), value);
}

// "3, 5-7, 9" from a sorted list of integers.
std::string ranges(const std::vector<long>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        while (j + 1 < v.size() && v[j + 1] == v[j] + 1) ++j;
        if (i > 0) os << ", ";
        os << v[i];
        if (j > i) os << '-' << v[j];
        i = j + 1;
    }
    return os.str();
}

struct SubjectRows {
    std::string id;
    int first_line = 0;
    std::optional<long> group;
    bool group_conflict = false;
    int gap_line = 0;  ///< first row whose time_index skips ahead
    std::vector<long> times;
    std::vector<std::vector<double>> values;  ///< per row, k channels
};

}  // namespace

ValidationReport validate_panel(std::istream& in, const std::string& source) {
    ValidationReport report;
    report.source = source;
    auto violation = [&](int line, std::string subject, std::string message) {
        report.violations.push_back({line, std::move(subject), std::move(message)});
    };

    std::string line;
    if (!std::getline(in, line)) {
        violation(0, "", "empty file: missing header");
        return report;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    int k = static_cast<int>(header.size()) - 3;
    bool header_ok = k >= 1 && header[0] == "subject_id" && header[1] == "group_id" && header[2] == "time_index";
    for (int j = 0; header_ok && j < k; ++j) header_ok = header[3 + j] == "ch_" + std::to_string(j + 1);
    if (!header_ok) {
        violation(1, "", "header must be subject_id,group_id,time_index,ch_1,...,ch_k; got '" + line + "'");
        if (k < 1) return report;
    }

    std::vector<SubjectRows> subjects;
    std::map<std::string, std::size_t> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            violation(line_no, "", "empty line");
            continue;
        }
        const auto fields = split(line);
        if (static_cast<int>(fields.size()) != k + 3) {
            violation(line_no, "", "expected " + std::to_string(k + 3) + " fields, found " +
                                       std::to_string(fields.size()));
            continue;
        }
        const std::string id(fields[0]);
        if (id.empty()) {
            violation(line_no, "", "empty subject_id");
            continue;
        }
        if (subjects.empty() || subjects.back().id != id) {
            if (seen.count(id)) {
                violation(line_no, id, "rows are not contiguous: subject reappears after other subjects");
            } else if (!subjects.empty() && id < subjects.back().id) {
                violation(line_no, id, "rows are not sorted by subject_id: follows subject " + subjects.back().id);
            }
            if (!seen.count(id)) {
                seen[id] = subjects.size();
                subjects.push_back({id, line_no, std::nullopt, false, 0, {}, {}});
            }
        }
        SubjectRows& s = subjects[seen[id]];

        long group = -1;
        if (!parse(fields[1], group) || group < 0) {
            violation(line_no, id, "group_id '" + std::string(fields[1]) + "' is not a nonnegative integer");
        } else if (!s.group) {
            s.group = group;
        } else if (*s.group != group && !s.group_conflict) {
            s.group_conflict = true;
            violation(line_no, id, "group_id changes from " + std::to_string(*s.group) + " to " +
                                       std::to_string(group));
        }

        long t = 0;
        if (!parse(fields[2], t) || t < 1) {
            violation(line_no, id, "time_index '" + std::string(fields[2]) + "' is not a positive integer");
            continue;
        }
        std::vector<double> row(k);
        for (int j = 0; j < k; ++j) {
            double v = 0.0;
            if (!parse_value(fields[3 + j], v) || !std::isfinite(v)) {
                violation(line_no, id, "non-finite or missing value '" + std::string(fields[3 + j]) +
                                           "' at time_index " + std::to_string(t) + ", ch_" +
                                           std::to_string(j + 1));
                v = std::numeric_limits<double>::quiet_NaN();
            }
            row[j] = v;
        }
        if (s.gap_line == 0 && t > (s.times.empty() ? 0L : s.times.back()) + 1) s.gap_line = line_no;
        if (!s.times.empty() && t <= s.times.back()) {
            violation(line_no, id, "time_index " + std::to_string(t) +
                                       (t == s.times.back() ? " is duplicated" : " is out of order, after " +
                                                                                    std::to_string(s.times.back())));
        }
        s.times.push_back(t);
        s.values.push_back(std::move(row));
    }
    if (subjects.empty()) {
        violation(0, "", "no data rows");
        return report;
    }

    // Per-subject time contiguity.
    for (const auto& s : subjects) {
        std::vector<long> sorted = s.times;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        std::vector<long> missing;
        long expect = 1;
        for (long t : sorted) {
            for (; expect < t; ++expect) missing.push_back(expect);
            expect = t + 1;
        }
        if (!missing.empty()) {
            violation(s.gap_line ? s.gap_line : s.first_line, s.id,
                      "time_index is not contiguous from 1; missing " + ranges(missing));
        }
    }
    const std::size_t T = subjects.front().times.size();
    for (const auto& s : subjects) {
        if (s.times.size() != T) {
            violation(s.first_line, s.id, "has " + std::to_string(s.times.size()) + " rows, subject " +
                                              subjects.front().id + " has " + std::to_string(T));
        }
    }
    std::set<long> labels;
    for (const auto& s : subjects) {
        if (s.group) labels.insert(*s.group);
    }
    if (!labels.empty()) {
        std::vector<long> missing;
        for (long g = 0; g <= *labels.rbegin(); ++g) {
            if (!labels.count(g)) missing.push_back(g);
        }
        if (!missing.empty()) {
            violation(0, "", "group labels must form 0..G-1; missing " + ranges(missing));
        }
    }
    if (!report.ok()) return report;

    const int N = static_cast<int>(subjects.size());
    std::vector<double> values(static_cast<std::size_t>(N) * k * T);
    std::vector<int> group_of;
    std::vector<std::string> ids;
    for (int n = 0; n < N; ++n) {
        const auto& s = subjects[n];
        for (std::size_t t = 0; t < T; ++t) {
            for (int j = 0; j < k; ++j) values[(static_cast<std::size_t>(n) * k + j) * T + t] = s.values[t][j];
        }
        group_of.push_back(static_cast<int>(*s.group));
        ids.push_back(s.id);
    }
    report.panel = Panel(N, k, static_cast<int>(T), std::move(values), std::move(group_of), std::move(ids));
    return report;
}

ValidationReport validate_panel_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return validate_panel(in, path);
}

Panel read_panel_csv(const std::string& path) {
    auto report = validate_panel_file(path);
    if (!report.ok()) {
        throw Error(ErrorCode::IngestionError, std::to_string(report.violations.size()) +
                                                   " violation(s) in " + path + "\n" + report.format());
    }
    return std::move(*report.panel);
}

void write_panel_csv(const Panel& panel, std::ostream& out) {
    const int k = panel.n_channels();
    out << "subject_id,group_id,time_index";
    for (int j = 1; j <= k; ++j) out << ",ch_" << j;
    out << '\n';
    std::vector<int> order(panel.n_subjects());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return panel.subject_id(a) < panel.subject_id(b); });
    for (int n : order) {
        if (panel.subject_id(n).find_first_of(",\r\n") != std::string::npos || panel.subject_id(n).empty()) {
            throw Error(ErrorCode::InvalidArgument, "subject id '" + panel.subject_id(n) + "' cannot be written to CSV");
        }
        for (int t = 0; t < panel.n_time(); ++t) {
            out << panel.subject_id(n) << ',' << panel.group_of(n) << ',' << t + 1;
            for (int j = 0; j < k; ++j) out << ',' << format_number(panel(n, j, t));
            out << '\n';
        }
    }
}

void write_panel_csv(const Panel& panel, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    write_panel_csv(panel, out);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace mxfar

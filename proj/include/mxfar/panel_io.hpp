#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mxfar/core.hpp"

namespace mxfar {

/// Shortest round-trip decimal form; "nan", "inf" and "-inf" for non-finite values.
[[nodiscard]] std::string format_number(double value);

struct Violation {
    int line = 0;  ///< 1-based line number, 0 for file-level problems
    std::string subject;
    std::string message;
};

struct ValidationReport {
    std::string source;
    std::vector<Violation> violations;
    std::optional<Panel> panel;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
    /// One "source:line: message" entry per violation.
    [[nodiscard]] std::string format(std::size_t max_entries = 50) const;
};

/**
 * Checks the panel CSV contract and collects every violation:
 * header `subject_id,group_id,time_index,ch_1,...,ch_k`; rows grouped by
 * subject with subjects in increasing byte order of their id; time_index
 * 1-based, contiguous and increasing per subject; equal length across
 * subjects; one group label per subject, labels forming {0, ..., G-1};
 * finite channel values.
 */
[[nodiscard]] ValidationReport validate_panel(std::istream& in, const std::string& source = "<stream>");
/// Throws IoError when the file cannot be opened.
[[nodiscard]] ValidationReport validate_panel_file(const std::string& path);

/// Throws IngestionError carrying the formatted report when validation fails.
[[nodiscard]] Panel read_panel_csv(const std::string& path);

/// Writes the panel in the CSV contract; subjects are emitted in byte order of their id.
void write_panel_csv(const Panel& panel, std::ostream& out);
void write_panel_csv(const Panel& panel, const std::string& path);

}  // namespace mxfar

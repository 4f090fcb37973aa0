#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace quicklap {

enum class ReportFormat { markdown, csv };

/// Throws std::invalid_argument for names other than "markdown" and "csv".
ReportFormat report_format_from_name(std::string_view name);

/// Renders the scenario x algorithm table (mean +- SEM of final NMSE) and the utterance x
/// algorithm table from a results directory written by export_results.
/// Throws std::runtime_error when files are missing or corrupt.
std::string render_report(const std::filesystem::path& dir, ReportFormat format);

}  // namespace quicklap

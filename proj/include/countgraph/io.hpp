#pragma once

// File formats: counts/covariate CSV (RFC 4180), parameter and graph JSON,
// DOT graph export.

#include "countgraph/model.hpp"
#include "countgraph/spectral.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace countgraph::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC 4180: quoted fields, doubled quotes, CRLF or LF line ends.
CsvTable parse_csv(std::string_view text);
std::string format_csv(const CsvTable& table);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Header row of series labels, one row per time step, integer cells.
/// Errors name the offending line and column.
CountMatrix parse_counts(const CsvTable& table, std::vector<std::string>* labels);

/// Either a shared N x q design (every column a covariate) or, when a
/// "series" column exists, N rows per series in label order.
std::vector<Matrix> parse_covariates(const CsvTable& table, const std::vector<std::string>& labels,
                                     int length);

CountPanel read_panel(const std::filesystem::path& counts,
                      const std::filesystem::path& covariates = {}, double period = 52.0);

CsvTable counts_table(const CountPanel& panel);
CsvTable covariates_table(const Matrix& shared);

/// Counts divided by each series' maximum (series with max 0 stay 0).
CsvTable normalized_counts_table(const CountPanel& panel);

nlohmann::json params_to_json(const ModelParams& params, const std::vector<std::string>& labels = {});
ModelParams params_from_json(const nlohmann::json& j, std::vector<std::string>* labels = nullptr);

nlohmann::json graph_to_json(const GraphResult& graph, const std::vector<std::string>& labels);

/// Nodes in input order, edges sorted lexicographically.
std::string undirected_dot(const GraphResult& graph, const std::vector<std::string>& labels);
std::string directed_dot(const GraphResult& graph, const std::vector<std::string>& labels);

CsvTable matrix_table(const Matrix& m, const std::vector<std::string>& labels);
CsvTable weights_table(const GraphResult& graph, const std::vector<std::string>& labels);

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::vector<std::string> default_labels(int n);

}  // namespace countgraph::io

#include "countgraph/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

namespace countgraph::io {

namespace fs = std::filesystem;
using nlohmann::json;

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started || !field.empty()) {
          throw InputError("CSV line " + std::to_string(line) + ": unexpected quote inside field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw InputError("CSV: unterminated quoted field");
  if (!field.empty() || field_started || !record.empty()) end_record();

  CsvTable table;
  if (records.empty()) return table;
  table.header = std::move(records.front());
  table.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return table;
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& cell, std::size_t line, std::size_t col, const std::string& name) {
  const std::string s = trim(cell);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InputError("line " + std::to_string(line) + ", column " + std::to_string(col) + " ('" + name +
                     "'): '" + cell + "' is not a finite number");
  }
  return v;
}

std::string dot_id(const std::string& label) {
  std::string out = "\"";
  for (const char c : label) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0." + std::string(digits, '0')) s.erase(0, 1);
  return s;
}

}  // namespace

std::string format_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out.push_back(',');
      out += quote(row[i]);
    }
    out += "\r\n";
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, ptr);
}

std::vector<std::string> default_labels(int n) {
  std::vector<std::string> labels;
  for (int i = 0; i < n; ++i) labels.push_back("Y" + std::to_string(i + 1));
  return labels;
}

CountMatrix parse_counts(const CsvTable& table, std::vector<std::string>* labels) {
  const std::size_t n = table.header.size();
  if (n == 0) throw InputError("counts CSV: missing header row of series labels");
  if (table.rows.empty()) throw InputError("counts CSV: no data rows");
  CountMatrix counts(n, table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = r + 2;
    if (row.size() != n) {
      throw InputError("counts CSV line " + std::to_string(line) + ": expected " + std::to_string(n) +
                       " cells, found " + std::to_string(row.size()));
    }
    for (std::size_t c = 0; c < n; ++c) {
      const std::string s = trim(row[c]);
      long long v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
        throw InputError("counts CSV line " + std::to_string(line) + ", column " + std::to_string(c + 1) +
                         " ('" + table.header[c] + "'): '" + row[c] + "' is not a non-negative integer");
      }
      counts(c, r) = v;
    }
  }
  if (labels) {
    labels->clear();
    for (const auto& h : table.header) labels->push_back(trim(h));
  }
  return counts;
}

std::vector<Matrix> parse_covariates(const CsvTable& table, const std::vector<std::string>& labels,
                                     int length) {
  const auto series_it = std::find(table.header.begin(), table.header.end(), "series");
  const std::size_t n = labels.size();
  if (series_it == table.header.end()) {
    const auto q = table.header.size();
    if (static_cast<int>(table.rows.size()) != length) {
      throw InputError("covariates CSV: expected " + std::to_string(length) + " rows, found " +
                       std::to_string(table.rows.size()));
    }
    Matrix z(length, q);
    for (int r = 0; r < length; ++r) {
      if (table.rows[r].size() != q) {
        throw InputError("covariates CSV line " + std::to_string(r + 2) + ": expected " + std::to_string(q) +
                         " cells");
      }
      for (std::size_t c = 0; c < q; ++c) z(r, c) = parse_real(table.rows[r][c], r + 2, c + 1, table.header[c]);
    }
    return std::vector<Matrix>(n, z);
  }

  const auto series_col = static_cast<std::size_t>(series_it - table.header.begin());
  const auto q = table.header.size() - 1;
  std::vector<Matrix> out(n, Matrix(length, q));
  std::vector<int> filled(n, 0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) {
      throw InputError("covariates CSV line " + std::to_string(r + 2) + ": wrong number of cells");
    }
    const auto it = std::find(labels.begin(), labels.end(), trim(row[series_col]));
    if (it == labels.end()) {
      throw InputError("covariates CSV line " + std::to_string(r + 2) + ": unknown series '" +
                       row[series_col] + "'");
    }
    const auto i = static_cast<std::size_t>(it - labels.begin());
    if (filled[i] >= length) {
      throw InputError("covariates CSV: too many rows for series '" + labels[i] + "'");
    }
    std::size_t k = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == series_col) continue;
      out[i](filled[i], k++) = parse_real(row[c], r + 2, c + 1, table.header[c]);
    }
    ++filled[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (filled[i] != length) {
      throw InputError("covariates CSV: series '" + labels[i] + "' has " + std::to_string(filled[i]) +
                       " rows, expected " + std::to_string(length));
    }
  }
  return out;
}

CountPanel read_panel(const fs::path& counts, const fs::path& covariates, double period) {
  CountPanel panel;
  panel.counts = parse_counts(parse_csv(read_file(counts)), &panel.labels);
  if (covariates.empty()) {
    panel.covariates.assign(panel.n(), build_covariates(panel.length(), period));
  } else {
    panel.covariates = parse_covariates(parse_csv(read_file(covariates)), panel.labels, panel.length());
  }
  panel.validate();
  return panel;
}

CsvTable counts_table(const CountPanel& panel) {
  CsvTable t;
  t.header = panel.labels.empty() ? default_labels(panel.n()) : panel.labels;
  for (int c = 0; c < panel.length(); ++c) {
    std::vector<std::string> row;
    for (int i = 0; i < panel.n(); ++i) row.push_back(std::to_string(panel.counts(i, c)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable covariates_table(const Matrix& shared) {
  CsvTable t;
  for (Eigen::Index c = 0; c < shared.cols(); ++c) t.header.push_back("z" + std::to_string(c + 1));
  for (Eigen::Index r = 0; r < shared.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < shared.cols(); ++c) row.push_back(format_double(shared(r, c)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable normalized_counts_table(const CountPanel& panel) {
  CsvTable t;
  t.header = panel.labels.empty() ? default_labels(panel.n()) : panel.labels;
  Vector peak(panel.n());
  for (int i = 0; i < panel.n(); ++i) peak[i] = static_cast<double>(panel.counts.row(i).maxCoeff());
  for (int c = 0; c < panel.length(); ++c) {
    std::vector<std::string> row;
    for (int i = 0; i < panel.n(); ++i) {
      const double v = peak[i] > 0.0 ? static_cast<double>(panel.counts(i, c)) / peak[i] : 0.0;
      row.push_back(format_double(v));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw InputError("params JSON: '" + what + "' must have " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InputError("params JSON: '" + what + "' row " + std::to_string(r) + " must have " +
                       std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

}  // namespace

json params_to_json(const ModelParams& params, const std::vector<std::string>& labels) {
  json j;
  j["n"] = params.n();
  j["p"] = params.p();
  j["q"] = params.q();
  j["labels"] = labels.empty() ? default_labels(params.n()) : labels;
  j["beta"] = matrix_json(params.beta());
  json ar = json::array();
  for (const auto& a : params.ar()) ar.push_back(matrix_json(a));
  j["ar"] = std::move(ar);
  j["sigma"] = std::vector<double>(params.sigma().data(), params.sigma().data() + params.n());
  return j;
}

ModelParams params_from_json(const json& j, std::vector<std::string>* labels) {
  try {
    const int n = j.at("n").get<int>(), p = j.at("p").get<int>(), q = j.at("q").get<int>();
    if (n < 1 || p < 0 || q < 0) throw InputError("params JSON: invalid dimensions");
    Matrix beta = matrix_from_json(j.at("beta"), q, n, "beta");
    const auto& ar_json = j.at("ar");
    if (!ar_json.is_array() || static_cast<int>(ar_json.size()) != p) {
      throw InputError("params JSON: 'ar' must hold p matrices");
    }
    std::vector<Matrix> ar;
    for (int k = 0; k < p; ++k) ar.push_back(matrix_from_json(ar_json[k], n, n, "ar[" + std::to_string(k) + "]"));
    const auto sig = j.at("sigma").get<std::vector<double>>();
    if (static_cast<int>(sig.size()) != n) throw InputError("params JSON: 'sigma' must have n entries");
    if (labels) {
      *labels = j.contains("labels") ? j["labels"].get<std::vector<std::string>>() : default_labels(n);
    }
    return ModelParams(std::move(beta), std::move(ar), Eigen::Map<const Vector>(sig.data(), n));
  } catch (const json::exception& e) {
    throw InputError(std::string("params JSON: ") + e.what());
  }
}

json graph_to_json(const GraphResult& graph, const std::vector<std::string>& labels) {
  json j;
  j["nodes"] = labels;
  json und = json::array();
  for (const auto& e : graph.undirected) und.push_back({{"i", e.i}, {"j", e.j}, {"rho", e.rho}});
  j["undirected"] = std::move(und);
  json dir = json::array();
  for (const auto& e : graph.directed) dir.push_back({{"from", e.from}, {"to", e.to}, {"weights", e.weights}});
  j["directed"] = std::move(dir);
  j["iw"] = std::vector<double>(graph.in_weight.data(), graph.in_weight.data() + graph.in_weight.size());
  j["ow"] = std::vector<double>(graph.out_weight.data(), graph.out_weight.data() + graph.out_weight.size());
  return j;
}

std::string undirected_dot(const GraphResult& graph, const std::vector<std::string>& labels) {
  std::vector<UndirectedEdge> edges = graph.undirected;
  std::sort(edges.begin(), edges.end(),
            [](const auto& a, const auto& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
  std::ostringstream os;
  os << "graph partial_correlation {\n";
  for (const auto& l : labels) os << "  " << dot_id(l) << ";\n";
  for (const auto& e : edges) {
    os << "  " << dot_id(labels[e.i]) << " -- " << dot_id(labels[e.j]) << " [label=\"" << fixed(e.rho, 4)
       << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

std::string directed_dot(const GraphResult& graph, const std::vector<std::string>& labels) {
  std::vector<DirectedEdge> edges = graph.directed;
  std::sort(edges.begin(), edges.end(),
            [](const auto& a, const auto& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
  std::ostringstream os;
  os << "digraph causality {\n";
  for (const auto& l : labels) os << "  " << dot_id(l) << ";\n";
  for (const auto& e : edges) {
    std::string w;
    for (std::size_t k = 0; k < e.weights.size(); ++k) {
      if (k) w += ",";
      w += fixed(e.weights[k], 4);
    }
    os << "  " << dot_id(labels[e.from]) << " -> " << dot_id(labels[e.to]) << " [label=\"" << w << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

CsvTable matrix_table(const Matrix& m, const std::vector<std::string>& labels) {
  CsvTable t;
  t.header.push_back("node");
  t.header.insert(t.header.end(), labels.begin(), labels.end());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<std::string> row{labels[r]};
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(format_double(m(r, c)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable weights_table(const GraphResult& graph, const std::vector<std::string>& labels) {
  CsvTable t;
  t.header = {"node", "iw", "ow"};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    t.rows.push_back({labels[i], format_double(graph.in_weight[i]), format_double(graph.out_weight[i])});
  }
  return t;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::system_error(errno, std::generic_category(), "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::system_error(errno, std::generic_category(), "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw std::system_error(ec, "cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
}

}  // namespace countgraph::io

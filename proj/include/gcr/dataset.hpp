#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gcr/error.hpp"

namespace gcr {

// One named per-observation variable, stored flat in cluster-grouped row
// order. A column is numeric when every non-missing cell parses as a double;
// otherwise it is kept categorical on its raw text.
struct Column {
  bool numeric = true;
  std::vector<double> values;     // parsed values (NaN at missing cells)
  std::vector<std::string> raw;   // original text
  std::vector<std::uint8_t> missing;
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.c_str();
  char* end = nullptr;
  out = std::strtod(b, &end);
  if (end == b) return false;
  while (*end == ' ' || *end == '\t') ++end;
  return *end == '\0' && std::isfinite(out);
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

class ClusteredDataset {
 public:
  // Builds a dataset from flat rows, grouping by cluster id in order of first
  // appearance. Within a cluster, rows keep their input order unless an
  // ordering column is named; sorting is stable, numeric when possible.
  static ClusteredDataset from_rows(std::vector<std::string> cluster_of_row,
                                    std::vector<double> response,
                                    std::map<std::string, Column> columns,
                                    const std::string& ordering_col = "") {
    const size_t n = cluster_of_row.size();
    if (response.size() != n) fail_data("response length mismatch");
    for (auto& [name, col] : columns) {
      if (col.raw.size() != n)
        fail_data("column '" + name + "' length mismatch");
      finalize_column(col);
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // group by first appearance of each cluster id
    std::map<std::string, int> first_seen;
    std::vector<std::string> cluster_order;
    for (size_t r = 0; r < n; ++r)
      if (first_seen.emplace(cluster_of_row[r], (int)cluster_order.size()).second)
        cluster_order.push_back(cluster_of_row[r]);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return first_seen[cluster_of_row[a]] < first_seen[cluster_of_row[b]];
    });
    if (!ordering_col.empty()) {
      auto it = columns.find(ordering_col);
      if (it == columns.end())
        fail_data("ordering column '" + ordering_col + "' not found");
      const Column& oc = it->second;
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (first_seen[cluster_of_row[a]] != first_seen[cluster_of_row[b]])
          return first_seen[cluster_of_row[a]] < first_seen[cluster_of_row[b]];
        if (oc.numeric) return oc.values[a] < oc.values[b];
        return oc.raw[a] < oc.raw[b];
      });
    }

    ClusteredDataset ds;
    ds.cluster_ids_ = std::move(cluster_order);
    ds.response_.resize(n);
    for (auto& [name, col] : columns) {
      Column re;
      re.numeric = col.numeric;
      re.values.resize(n);
      re.raw.resize(n);
      re.missing.resize(n);
      ds.columns_.emplace(name, std::move(re));
    }
    std::vector<size_t> counts(ds.cluster_ids_.size(), 0);
    for (size_t r = 0; r < n; ++r) counts[first_seen[cluster_of_row[r]]]++;
    ds.spans_.resize(ds.cluster_ids_.size());
    size_t pos = 0;
    for (size_t c = 0; c < counts.size(); ++c) {
      ds.spans_[c] = {pos, pos + counts[c]};
      pos += counts[c];
    }
    for (size_t out = 0; out < n; ++out) {
      const size_t src = order[out];
      ds.response_[out] = response[src];
      for (auto& [name, col] : columns) {
        Column& dst = ds.columns_[name];
        dst.values[out] = col.values[src];
        dst.raw[out] = col.raw[src];
        dst.missing[out] = col.missing[src];
      }
    }
    return ds;
  }

  int n_clusters() const { return static_cast<int>(cluster_ids_.size()); }
  size_t n_obs() const { return response_.size(); }
  const std::string& cluster_id(int i) const { return cluster_ids_[i]; }
  std::pair<size_t, size_t> span(int i) const { return spans_[i]; }
  int cluster_size(int i) const {
    return static_cast<int>(spans_[i].second - spans_[i].first);
  }
  double response(size_t flat) const { return response_[flat]; }
  bool has_column(const std::string& name) const {
    return columns_.count(name) > 0;
  }
  const Column& column(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) fail_data("unknown column '" + name + "'");
    return it->second;
  }
  std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    for (const auto& [name, col] : columns_) names.push_back(name);
    return names;
  }
  // Cluster index of a flat row (rows are contiguous per cluster).
  int cluster_of(size_t flat) const {
    int lo = 0, hi = n_clusters() - 1;
    while (lo < hi) {
      int mid = (lo + hi) / 2;
      if (flat >= spans_[mid].second) lo = mid + 1; else hi = mid;
    }
    return lo;
  }

 private:
  static void finalize_column(Column& col) {
    col.values.assign(col.raw.size(), 0.0);
    col.missing.assign(col.raw.size(), 0);
    col.numeric = true;
    for (size_t i = 0; i < col.raw.size(); ++i) {
      const std::string t = detail::trim(col.raw[i]);
      if (t.empty()) {
        col.missing[i] = 1;
        col.values[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double v;
      if (detail::parse_double(t, v)) col.values[i] = v;
      else col.numeric = false;
    }
  }

  std::vector<std::string> cluster_ids_;
  std::vector<std::pair<size_t, size_t>> spans_;
  std::vector<double> response_;
  std::map<std::string, Column> columns_;
};

namespace detail {

// RFC 4180 records: comma separated, double quotes for embedded commas,
// quotes escaped by doubling, CRLF tolerated, newlines allowed inside quotes.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string cell;
  bool quoted = false;
  bool row_open = false;
  size_t i = 0;
  // skip a UTF-8 BOM if present
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') { cell += '"'; ++i; }
        else quoted = false;
      } else cell += c;
      continue;
    }
    switch (c) {
      case '"': quoted = true; row_open = true; break;
      case ',': fields.push_back(cell); cell.clear(); row_open = true; break;
      case '\r': break;
      case '\n':
        if (row_open || !cell.empty() || !fields.empty()) {
          fields.push_back(cell);
          records.push_back(std::move(fields));
          fields = {};
          cell.clear();
          row_open = false;
        }
        break;
      default: cell += c; row_open = true; break;
    }
  }
  if (quoted) fail_data("unterminated quoted field in CSV");
  if (row_open || !cell.empty() || !fields.empty()) {
    fields.push_back(cell);
    records.push_back(std::move(fields));
  }
  return records;
}

}  // namespace detail

// Loads a long-format CSV and groups rows by cluster. Responses must parse
// as finite numbers; a missing or unparseable response is an ingestion error
// naming the offending row (1-based, header is row 1).
inline ClusteredDataset load_csv(const std::string& path,
                                 const std::string& cluster_col,
                                 const std::string& response_col,
                                 const std::string& ordering_col = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto records = detail::parse_csv(buf.str());
  if (records.empty()) fail_data("empty CSV file '" + path + "'");

  const auto& header = records[0];
  auto col_index = [&](const std::string& name) -> int {
    for (size_t c = 0; c < header.size(); ++c)
      if (detail::trim(header[c]) == name) return static_cast<int>(c);
    return -1;
  };
  const int ci = col_index(cluster_col);
  if (ci < 0) fail_data("cluster column '" + cluster_col + "' not found in header");
  const int ri = col_index(response_col);
  if (ri < 0) fail_data("response column '" + response_col + "' not found in header");
  if (!ordering_col.empty() && col_index(ordering_col) < 0)
    fail_data("ordering column '" + ordering_col + "' not found in header");
  if (records.size() < 2) fail_data("CSV has a header but no data rows");

  std::vector<std::string> cluster_of_row;
  std::vector<double> response;
  std::map<std::string, Column> columns;
  for (size_t c = 0; c < header.size(); ++c) {
    const std::string name = detail::trim(header[c]);
    if (static_cast<int>(c) == ri) continue;
    if (name.empty()) fail_data("empty column name in header");
    columns[name] = Column{};
  }

  for (size_t r = 1; r < records.size(); ++r) {
    const auto& row = records[r];
    if (row.size() != header.size())
      fail_data("row " + std::to_string(r + 1) + " has " +
                std::to_string(row.size()) + " fields, expected " +
                std::to_string(header.size()));
    const std::string cl = detail::trim(row[ci]);
    if (cl.empty())
      fail_data("row " + std::to_string(r + 1) + ": missing cluster id");
    double y;
    const std::string ys = detail::trim(row[ri]);
    if (ys.empty() || !detail::parse_double(ys, y))
      fail_data("row " + std::to_string(r + 1) + ": response '" + ys +
                "' is missing or not a finite number");
    cluster_of_row.push_back(cl);
    response.push_back(y);
    for (size_t c = 0; c < header.size(); ++c) {
      if (static_cast<int>(c) == ri) continue;
      columns[detail::trim(header[c])].raw.push_back(row[c]);
    }
  }
  return ClusteredDataset::from_rows(std::move(cluster_of_row), std::move(response),
                                     std::move(columns), ordering_col);
}

}  // namespace gcr

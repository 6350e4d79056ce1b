#include "panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace fda {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Splits one delimited line honoring double-quoted fields ("" escapes a
// quote).  Returns false at end of stream.
bool read_record(std::istream& in, char delim, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool in_quotes = false;
  bool saw_any = false;
  int c;
  while ((c = in.get()) != std::char_traits<char>::eof()) {
    saw_any = true;
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == delim) {
      out.push_back(field);
      field.clear();
    } else if (ch == '\n') {
      break;
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (!saw_any) return false;
  out.push_back(field);
  return true;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& raw, std::size_t line,
                    const std::string& column) {
  const std::string s = trim(raw);
  if (s.empty()) {
    throw validation_error("line " + std::to_string(line) + ": column '" +
                           column + "' is empty (missing cells not allowed)");
  }
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || !std::isfinite(v)) {
    throw validation_error("line " + std::to_string(line) + ": column '" +
                           column + "' value '" + s + "' is not numeric");
  }
  return v;
}

long long parse_period(const std::string& raw, std::size_t line,
                       const std::string& column) {
  const double v = parse_double(raw, line, column);
  const double r = std::nearbyint(v);
  if (std::abs(v - r) > 1e-9 || std::abs(r) > 4e15) {
    throw validation_error("line " + std::to_string(line) + ": column '" +
                           column + "' value '" + trim(raw) +
                           "' is not an integer time index");
  }
  return static_cast<long long>(r);
}

std::string join_sample(const std::vector<std::string>& items,
                        std::size_t cap = 8) {
  std::string out;
  const std::size_t n = std::min(cap, items.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  if (items.size() > cap) {
    out += ", … (" + std::to_string(items.size() - cap) + " more)";
  }
  return out;
}

struct RawRow {
  std::string unit;
  long long period;
  double y, d, z, weight;
  std::string cluster;
};

}  // namespace

int PanelDataset::period_index(long long period) const {
  auto it = std::lower_bound(periods.begin(), periods.end(), period);
  if (it == periods.end() || *it != period) {
    throw validation_error("period " + std::to_string(period) +
                           " not present in panel");
  }
  return static_cast<int>(it - periods.begin());
}

PanelDataset load_panel(std::istream& source, const ColumnMap& columns) {
  std::vector<std::string> header;
  // Delimiter: tab when the header line contains one, else comma.
  std::string first_line;
  if (!std::getline(source, first_line)) {
    throw validation_error("input is empty: no header row");
  }
  const char delim =
      first_line.find('\t') != std::string::npos ? '\t' : ',';
  {
    std::istringstream hs(first_line);
    read_record(hs, delim, header);
    for (auto& h : header) h = trim(h);
  }

  auto col_index = [&](const std::string& name,
                       bool required) -> std::optional<std::size_t> {
    if (name.empty()) {
      if (required) {
        throw validation_error("column map entry must not be empty");
      }
      return std::nullopt;
    }
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) {
        throw validation_error("mapped column '" + name +
                               "' not found in header");
      }
      throw validation_error("optional column '" + name +
                             "' not found in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t c_unit = *col_index(columns.unit, true);
  const std::size_t c_period = *col_index(columns.period, true);
  const std::size_t c_y = *col_index(columns.y, true);
  const std::size_t c_d = *col_index(columns.d, true);
  const auto c_z = columns.z.empty() ? std::nullopt : col_index(columns.z, false);
  const auto c_w =
      columns.weight.empty() ? std::nullopt : col_index(columns.weight, false);
  const auto c_cl = columns.cluster.empty() ? std::nullopt
                                            : col_index(columns.cluster, false);

  std::vector<RawRow> raw;
  std::vector<std::string> record;
  std::size_t line = 1;
  while (read_record(source, delim, record)) {
    ++line;
    if (record.size() == 1 && trim(record[0]).empty()) continue;  // blank line
    if (record.size() != header.size()) {
      throw validation_error("line " + std::to_string(line) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(record.size()));
    }
    RawRow r;
    r.unit = trim(record[c_unit]);
    if (r.unit.empty()) {
      throw validation_error("line " + std::to_string(line) +
                             ": empty unit id");
    }
    r.period = parse_period(record[c_period], line, columns.period);
    r.y = parse_double(record[c_y], line, columns.y);
    r.d = parse_double(record[c_d], line, columns.d);
    r.z = c_z ? parse_double(record[*c_z], line, columns.z) : kNaN;
    r.weight = c_w ? parse_double(record[*c_w], line, columns.weight) : 1.0;
    if (!(r.weight > 0)) {
      throw validation_error("line " + std::to_string(line) + ": unit '" +
                             r.unit + "' has non-positive weight " +
                             std::to_string(r.weight));
    }
    r.cluster = c_cl ? trim(record[*c_cl]) : r.unit;
    if (r.cluster.empty()) {
      throw validation_error("line " + std::to_string(line) +
                             ": empty cluster id");
    }
    raw.push_back(std::move(r));
  }
  if (raw.empty()) {
    throw validation_error("input has a header but no data rows");
  }

  PanelDataset ds;
  // Collect sorted distinct units and periods.
  for (const auto& r : raw) {
    ds.units.push_back(r.unit);
    ds.periods.push_back(r.period);
  }
  std::sort(ds.units.begin(), ds.units.end());
  ds.units.erase(std::unique(ds.units.begin(), ds.units.end()),
                 ds.units.end());
  std::sort(ds.periods.begin(), ds.periods.end());
  ds.periods.erase(std::unique(ds.periods.begin(), ds.periods.end()),
                   ds.periods.end());
  if (ds.periods.size() < 2) {
    throw validation_error("panel needs at least 2 distinct periods, found " +
                           std::to_string(ds.periods.size()));
  }

  std::unordered_map<std::string, int> unit_index;
  for (int g = 0; g < ds.n_units(); ++g) unit_index[ds.units[g]] = g;

  const int P = ds.n_periods();
  const std::size_t cells = ds.units.size() * static_cast<std::size_t>(P);
  ds.y.assign(cells, kNaN);
  ds.d.assign(cells, kNaN);
  if (c_z) ds.z.assign(cells, kNaN);
  ds.unit_weight.assign(ds.units.size(), kNaN);
  std::vector<std::string> unit_cluster_name(ds.units.size());
  std::vector<char> seen(cells, 0);

  for (const auto& r : raw) {
    const int g = unit_index[r.unit];
    const int t = ds.period_index(r.period);
    const std::size_t i = static_cast<std::size_t>(g) * P + t;
    if (seen[i]) {
      throw validation_error("duplicate observation for unit '" + r.unit +
                             "' in period " + std::to_string(r.period));
    }
    seen[i] = 1;
    ds.y[i] = r.y;
    ds.d[i] = r.d;
    if (c_z) ds.z[i] = r.z;
    if (std::isnan(ds.unit_weight[g])) {
      ds.unit_weight[g] = r.weight;
      unit_cluster_name[g] = r.cluster;
    } else {
      if (ds.unit_weight[g] != r.weight) {
        throw validation_error("unit '" + r.unit +
                               "' has a weight that varies across periods (" +
                               std::to_string(ds.unit_weight[g]) + " vs " +
                               std::to_string(r.weight) +
                               "); weights must be constant within unit");
      }
      if (unit_cluster_name[g] != r.cluster) {
        throw validation_error("unit '" + r.unit +
                               "' appears in two clusters ('" +
                               unit_cluster_name[g] + "' and '" + r.cluster +
                               "')");
      }
    }
  }

  // Balance check: every unit present in every period.
  std::vector<std::string> offenders;
  for (int g = 0; g < ds.n_units(); ++g) {
    int have = 0;
    for (int t = 0; t < P; ++t) {
      have += seen[static_cast<std::size_t>(g) * P + t];
    }
    if (have != P) offenders.push_back(ds.units[g]);
  }
  if (!offenders.empty()) {
    throw validation_error(
        "unbalanced panel: " + std::to_string(offenders.size()) +
        " unit(s) missing in some period(s): " + join_sample(offenders));
  }

  // Cluster ids, sorted distinct.
  ds.cluster_ids = unit_cluster_name;
  std::sort(ds.cluster_ids.begin(), ds.cluster_ids.end());
  ds.cluster_ids.erase(
      std::unique(ds.cluster_ids.begin(), ds.cluster_ids.end()),
      ds.cluster_ids.end());
  std::unordered_map<std::string, int> cluster_index;
  for (int c = 0; c < ds.n_clusters(); ++c) {
    cluster_index[ds.cluster_ids[c]] = c;
  }
  ds.unit_cluster.resize(ds.units.size());
  for (int g = 0; g < ds.n_units(); ++g) {
    ds.unit_cluster[g] = cluster_index[unit_cluster_name[g]];
  }
  return ds;
}

PanelDataset load_panel_file(const std::string& path,
                             const ColumnMap& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw validation_error("cannot open input file '" + path + "'");
  }
  return load_panel(in, columns);
}

PanelDataset load_panel_string(const std::string& text,
                               const ColumnMap& columns) {
  std::istringstream in(text);
  return load_panel(in, columns);
}

FdView first_differences(const PanelDataset& panel) {
  FdView fd;
  fd.units = panel.units;
  fd.cluster_ids = panel.cluster_ids;
  fd.periods = panel.periods;
  fd.has_z = panel.has_z();
  const int P = panel.n_periods();
  fd.rows.reserve(static_cast<std::size_t>(panel.n_units()) * (P - 1));
  for (int g = 0; g < panel.n_units(); ++g) {
    for (int p = 0; p + 1 < P; ++p) {
      FdRow row;
      row.unit = g;
      row.pair = p;
      row.dy = panel.yv(g, p + 1) - panel.yv(g, p);
      row.dd = panel.dv(g, p + 1) - panel.dv(g, p);
      row.dz = fd.has_z ? panel.zv(g, p + 1) - panel.zv(g, p) : kNaN;
      row.d_lag = panel.dv(g, p);
      row.d_lag2 = p >= 1 ? panel.dv(g, p - 1) : kNaN;
      row.dy_lag = p >= 1 ? panel.yv(g, p) - panel.yv(g, p - 1) : kNaN;
      row.weight = panel.unit_weight[g];
      row.cluster = panel.unit_cluster[g];
      fd.rows.push_back(row);
    }
  }
  return fd;
}

namespace {
VectorXd extract(const std::vector<FdRow>& rows, double FdRow::* field) {
  VectorXd v(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i].*field;
  return v;
}
}  // namespace

VectorXd FdView::dy() const { return extract(rows, &FdRow::dy); }
VectorXd FdView::dd() const { return extract(rows, &FdRow::dd); }
VectorXd FdView::dz() const { return extract(rows, &FdRow::dz); }
VectorXd FdView::d_lag() const { return extract(rows, &FdRow::d_lag); }
VectorXd FdView::d_lag2() const { return extract(rows, &FdRow::d_lag2); }
VectorXd FdView::dy_lag() const { return extract(rows, &FdRow::dy_lag); }
VectorXd FdView::weights() const { return extract(rows, &FdRow::weight); }

std::vector<int> FdView::clusters() const {
  std::vector<int> v(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i].cluster;
  return v;
}

std::vector<int> FdView::pair_ids() const {
  std::vector<int> v(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) v[i] = rows[i].pair;
  return v;
}

FdView FdView::filter_pair(int pair) const {
  if (pair < 0 || pair >= n_pairs()) {
    throw validation_error("period pair index " + std::to_string(pair) +
                           " out of range (panel has " +
                           std::to_string(n_pairs()) + " pair(s))");
  }
  FdView out;
  out.units = units;
  out.cluster_ids = cluster_ids;
  out.periods = periods;
  out.has_z = has_z;
  for (const auto& r : rows) {
    if (r.pair == pair) out.rows.push_back(r);
  }
  return out;
}

FoldAssignment assign_folds(const PanelDataset& panel, int L,
                            std::uint64_t seed) {
  if (L < 2) {
    throw validation_error("fold count must be at least 2, got " +
                           std::to_string(L));
  }
  const int C = panel.n_clusters();
  if (L > C) {
    throw validation_error("fold count " + std::to_string(L) +
                           " exceeds number of clusters " + std::to_string(C));
  }
  FoldAssignment fa;
  fa.L = L;
  fa.seed = seed;
  // Shuffle sorted cluster indices, then deal round-robin so per-fold
  // cluster counts differ by at most one.
  std::vector<int> order(C);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, fnv1a("fold-assignment")));
  rng.shuffle(order);
  fa.fold_of_cluster.assign(C, 0);
  for (int k = 0; k < C; ++k) {
    fa.fold_of_cluster[order[k]] = k % L;
  }
  fa.fold_of_unit.resize(panel.n_units());
  for (int g = 0; g < panel.n_units(); ++g) {
    fa.fold_of_unit[g] = fa.fold_of_cluster[panel.unit_cluster[g]];
  }
  return fa;
}

}  // namespace fda

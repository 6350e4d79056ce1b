#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace fda {

// Maps file column headers to panel roles.  Empty strings mean "not present":
// no instrument, unit weight 1, cluster = unit.
struct ColumnMap {
  std::string unit = "unit";
  std::string period = "period";
  std::string y = "y";
  std::string d = "d";
  std::string z;
  std::string weight;
  std::string cluster;
};

// Balanced long-format panel.  Units, periods, and cluster ids are kept
// sorted so every downstream computation is independent of input row order.
// Immutable after load; safe to share across threads.
class PanelDataset {
public:
  std::vector<std::string> units;        // sorted unit ids
  std::vector<long long> periods;        // sorted distinct time indices
  std::vector<std::string> cluster_ids;  // sorted distinct cluster ids

  // Per-unit attributes (indexed like `units`).
  std::vector<double> unit_weight;
  std::vector<int> unit_cluster;  // index into cluster_ids

  // Cell values, indexed unit-major: value(g, t) = data[g * n_periods + t].
  std::vector<double> y;
  std::vector<double> d;
  std::vector<double> z;  // empty when no instrument column was mapped

  bool has_z() const { return !z.empty(); }
  int n_units() const { return static_cast<int>(units.size()); }
  int n_periods() const { return static_cast<int>(periods.size()); }
  int n_clusters() const { return static_cast<int>(cluster_ids.size()); }

  double yv(int g, int t) const { return y[idx(g, t)]; }
  double dv(int g, int t) const { return d[idx(g, t)]; }
  double zv(int g, int t) const { return z[idx(g, t)]; }

  // Index of a period value; throws validation_error if absent.
  int period_index(long long period) const;

private:
  std::size_t idx(int g, int t) const {
    return static_cast<std::size_t>(g) * periods.size() +
           static_cast<std::size_t>(t);
  }
};

// One first-difference observation: unit g, consecutive period pair
// (periods[pair], periods[pair+1]).  Lag fields are NaN when the panel has
// no earlier period to supply them.
struct FdRow {
  int unit = 0;
  int pair = 0;
  double dy = 0;      // Y_t - Y_{t-1}
  double dd = 0;      // D_t - D_{t-1}
  double dz = 0;      // Z_t - Z_{t-1} (NaN when no instrument)
  double d_lag = 0;   // D_{t-1}, the baseline treatment of the pair
  double d_lag2 = 0;  // D_{t-2} (NaN for the first pair)
  double dy_lag = 0;  // Y_{t-1} - Y_{t-2} (NaN for the first pair)
  double weight = 1;
  int cluster = 0;
};

// First differences of a balanced panel: one row per unit per consecutive
// period pair, sorted by (unit, pair).  Self-contained value copy — does not
// reference the source dataset.
struct FdView {
  std::vector<FdRow> rows;
  std::vector<std::string> units;
  std::vector<std::string> cluster_ids;
  std::vector<long long> periods;
  bool has_z = false;

  int n_rows() const { return static_cast<int>(rows.size()); }
  int n_pairs() const { return static_cast<int>(periods.size()) - 1; }

  // Column extractors (row order preserved).
  VectorXd dy() const;
  VectorXd dd() const;
  VectorXd dz() const;
  VectorXd d_lag() const;
  VectorXd d_lag2() const;
  VectorXd dy_lag() const;
  VectorXd weights() const;
  std::vector<int> clusters() const;
  std::vector<int> pair_ids() const;

  // Restricts to the rows of one period pair (0-based pair index).
  FdView filter_pair(int pair) const;
};

// Cluster-level random partition into L near-equal folds.  Deterministic in
// (seed, sorted cluster ids); all units of a cluster share a fold.
struct FoldAssignment {
  int L = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of_unit;     // 0-based fold per unit index
  std::vector<int> fold_of_cluster;  // 0-based fold per cluster index
};

// Parses and validates a delimited text stream (comma or tab, header row,
// double-quote escaping).  Rejects unbalanced panels, duplicate
// (unit, period) cells, non-positive or within-unit-varying weights, and
// units spanning clusters — naming the offending units.
PanelDataset load_panel(std::istream& source, const ColumnMap& columns);
PanelDataset load_panel_file(const std::string& path, const ColumnMap& columns);
PanelDataset load_panel_string(const std::string& text, const ColumnMap& columns);

FdView first_differences(const PanelDataset& panel);

// Shuffles sorted cluster ids with the seeded engine and deals them
// round-robin: shuffled position k goes to fold k mod L.  Cluster counts per
// fold differ by at most one.
FoldAssignment assign_folds(const PanelDataset& panel, int L,
                            std::uint64_t seed);

}  // namespace fda

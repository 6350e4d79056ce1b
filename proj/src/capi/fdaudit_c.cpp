#include "fdaudit.h"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core/estimators.hpp"
#include "core/panel.hpp"
#include "core/report.hpp"
#include "core/simlab.hpp"

struct fda_dataset {
  fda::PanelDataset panel;
  std::string label;      // path, or "<buffer>" for in-memory loads
  std::string data_hash;  // fingerprint of the parsed content
  fda::Json columns;      // resolved column mapping, for report provenance
};

struct fda_result {
  std::string json;
  std::string csv;
};

namespace {

using fda::Json;

thread_local std::string t_last_error;

fda_status fail(fda_status code, const std::string& message) {
  t_last_error = message;
  return code;
}

template <typename Fn>
fda_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return FDA_OK;
  } catch (const fda::validation_error& e) {
    return fail(FDA_ERR_VALIDATION, e.what());
  } catch (const fda::numeric_error& e) {
    return fail(FDA_ERR_NUMERIC, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(FDA_ERR_USAGE, std::string("options JSON: ") + e.what());
  } catch (const std::exception& e) {
    return fail(FDA_ERR_NUMERIC, e.what());
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

Json parse_options(const char* options_json) {
  if (options_json == nullptr || *options_json == '\0') return Json::object();
  const Json o = Json::parse(options_json);
  if (!o.is_object()) {
    throw fda::validation_error("options must be a JSON object");
  }
  return o;
}

void check_keys(const Json& o, const std::vector<std::string>& allowed) {
  for (const auto& item : o.items()) {
    bool ok = false;
    for (const auto& k : allowed) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw fda::validation_error("unknown option '" + item.key() +
                                  "' for this command");
    }
  }
}

const std::vector<std::string> kLearnerKeys = {
    "learner",    "degree",    "lasso-penalty", "post-lasso",
    "mlp-hidden", "mlp-iters", "mlp-rate"};

std::vector<std::string> with_learner_keys(std::vector<std::string> keys) {
  keys.insert(keys.end(), kLearnerKeys.begin(), kLearnerKeys.end());
  return keys;
}

fda::ColumnMap columns_from(const Json& o) {
  fda::ColumnMap m;
  if (o.contains("unit")) m.unit = o.at("unit").get<std::string>();
  if (o.contains("period")) m.period = o.at("period").get<std::string>();
  if (o.contains("y")) m.y = o.at("y").get<std::string>();
  if (o.contains("d")) m.d = o.at("d").get<std::string>();
  if (o.contains("z")) m.z = o.at("z").get<std::string>();
  if (o.contains("weight")) m.weight = o.at("weight").get<std::string>();
  if (o.contains("cluster")) m.cluster = o.at("cluster").get<std::string>();
  return m;
}

Json columns_echo(const fda::ColumnMap& m) {
  Json o{{"unit", m.unit}, {"period", m.period}, {"y", m.y}, {"d", m.d}};
  if (!m.z.empty()) o["z"] = m.z;
  if (!m.weight.empty()) o["weight"] = m.weight;
  if (!m.cluster.empty()) o["cluster"] = m.cluster;
  return o;
}

std::string panel_fingerprint(const fda::PanelDataset& p) {
  std::ostringstream s;
  for (const auto& u : p.units) s << u << ';';
  s << '|';
  for (long long t : p.periods) s << t << ';';
  s << '|';
  for (const auto& c : p.cluster_ids) s << c << ';';
  s << '|';
  auto dump = [&s](const std::vector<double>& v) {
    for (double x : v) s << Json(x).dump() << ';';
    s << '|';
  };
  dump(p.y);
  dump(p.d);
  dump(p.z);
  dump(p.unit_weight);
  for (int c : p.unit_cluster) s << c << ';';
  return hex64(fda::fnv1a(s.str()));
}

fda_dataset* make_dataset(fda::PanelDataset panel, std::string label,
                          const fda::ColumnMap& columns) {
  auto* ds = new fda_dataset;
  ds->panel = std::move(panel);
  ds->label = std::move(label);
  ds->data_hash = panel_fingerprint(ds->panel);
  ds->columns = columns_echo(columns);
  return ds;
}

// ---------------------------------------------------------------------------
// Option readers.
// ---------------------------------------------------------------------------

std::uint64_t seed_from(const Json& o) {
  return o.value("seed", std::uint64_t{0});
}

double alpha_from(const Json& o) {
  const double alpha = o.value("alpha", 0.05);
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw fda::validation_error("alpha must lie strictly between 0 and 1");
  }
  return alpha;
}

int folds_from(const Json& o) {
  const int L = o.value("folds", 5);
  if (L < 2) throw fda::validation_error("folds must be at least 2");
  return L;
}

int threads_from(const Json& o) {
  const int t = o.value("threads", 1);
  if (t < 1) throw fda::validation_error("threads must be at least 1");
  return t;
}

fda::VcovKind vcov_from(const Json& o) {
  const std::string v = o.value("vcov", std::string("cr1"));
  if (v == "cr1") return fda::VcovKind::CR1;
  if (v == "cr0") return fda::VcovKind::CR0;
  throw fda::validation_error("unknown vcov '" + v + "' (cr1 | cr0)");
}

std::string vcov_name(fda::VcovKind v) {
  return v == fda::VcovKind::CR1 ? "cr1" : "cr0";
}

fda::LearnerSpec learner_from(const Json& o, std::uint64_t seed) {
  fda::LearnerSpec ls;
  const std::string kind = o.value("learner", std::string("lasso"));
  if (kind == "lasso") {
    ls.kind = fda::LearnerKind::PolyLasso;
  } else if (kind == "mlp") {
    ls.kind = fda::LearnerKind::Mlp;
  } else if (kind == "poly-ols") {
    ls.kind = fda::LearnerKind::PolyOls;
  } else {
    throw fda::validation_error("unknown learner '" + kind +
                                "' (lasso | mlp | poly-ols)");
  }
  ls.degree = o.value("degree", 3);
  const std::string pen = o.value("lasso-penalty", std::string("plugin"));
  if (pen == "plugin") {
    ls.penalty = fda::PenaltyRule::Plugin;
  } else if (pen.rfind("cv:", 0) == 0) {
    ls.penalty = fda::PenaltyRule::CrossValidated;
    try {
      ls.cv_folds = std::stoi(pen.substr(3));
    } catch (const std::exception&) {
      throw fda::validation_error("lasso-penalty cv:K needs an integer K");
    }
  } else if (pen.rfind("fixed:", 0) == 0) {
    ls.penalty = fda::PenaltyRule::Fixed;
    try {
      ls.fixed_lambda = std::stod(pen.substr(6));
    } catch (const std::exception&) {
      throw fda::validation_error("lasso-penalty fixed:L needs a number L");
    }
  } else {
    throw fda::validation_error("unknown lasso-penalty '" + pen +
                                "' (plugin | cv:K | fixed:L)");
  }
  ls.post_lasso = o.value("post-lasso", true);
  if (o.contains("mlp-hidden")) {
    ls.mlp_hidden = o.at("mlp-hidden").get<std::vector<int>>();
  }
  ls.mlp_iters = o.value("mlp-iters", 1000);
  ls.mlp_rate = o.value("mlp-rate", 1.0);
  ls.seed = seed;
  ls.validate();
  return ls;
}

Json learner_echo(const fda::LearnerSpec& ls) {
  switch (ls.kind) {
    case fda::LearnerKind::PolyLasso: {
      std::string pen = "plugin";
      if (ls.penalty == fda::PenaltyRule::CrossValidated) {
        pen = "cv:" + std::to_string(ls.cv_folds);
      } else if (ls.penalty == fda::PenaltyRule::Fixed) {
        pen = "fixed:" + Json(ls.fixed_lambda).dump();
      }
      return Json{{"kind", "lasso"},
                  {"degree", ls.degree},
                  {"penalty", pen},
                  {"post-lasso", ls.post_lasso}};
    }
    case fda::LearnerKind::PolyOls:
      return Json{{"kind", "poly-ols"}, {"degree", ls.degree}};
    case fda::LearnerKind::Mlp:
      return Json{{"kind", "mlp"},
                  {"hidden", ls.mlp_hidden},
                  {"iters", ls.mlp_iters},
                  {"rate", ls.mlp_rate}};
  }
  return Json::object();
}

fda::EstimatorOptions estimator_options_from(const Json& o,
                                             std::uint64_t seed) {
  fda::EstimatorOptions e;
  e.alpha = alpha_from(o);
  e.vcov = vcov_from(o);
  e.threads = threads_from(o);
  e.with_hausman = o.value("with-hausman", true);
  const std::string strat = o.value("hausman", std::string("bootstrap"));
  if (strat == "bootstrap") {
    e.hausman.strategy = fda::HausmanStrategy::ClusterBootstrap;
  } else if (strat == "influence") {
    e.hausman.strategy = fda::HausmanStrategy::InfluenceFunction;
  } else {
    throw fda::validation_error("unknown hausman strategy '" + strat +
                                "' (bootstrap | influence)");
  }
  e.hausman.bootstrap_reps = o.value("bootstrap", 399);
  if (e.hausman.bootstrap_reps < 2) {
    throw fda::validation_error("bootstrap replicate count must be at least 2");
  }
  e.hausman.seed = seed;
  return e;
}

Json hausman_echo(const fda::EstimatorOptions& e) {
  if (!e.with_hausman) return Json(nullptr);
  return Json{{"strategy",
               e.hausman.strategy == fda::HausmanStrategy::ClusterBootstrap
                   ? "bootstrap"
                   : "influence"},
              {"bootstrap", e.hausman.bootstrap_reps}};
}

// Resolves the period pair of a two-period operation: explicit "pair"
// [p1, p2] must name consecutive panel periods; the default is the last
// pair.  Returns the restricted view and the resolved period values.
struct ResolvedPair {
  fda::FdView view;
  long long p1 = 0;
  long long p2 = 0;
};

ResolvedPair resolve_pair(const fda::FdView& fd, const Json& o) {
  int pair = fd.n_pairs() - 1;
  if (o.contains("pair")) {
    const auto p = o.at("pair").get<std::vector<long long>>();
    if (p.size() != 2) {
      throw fda::validation_error("pair must be [period1, period2]");
    }
    int i1 = -1;
    for (std::size_t t = 0; t < fd.periods.size(); ++t) {
      if (fd.periods[t] == p[0]) i1 = static_cast<int>(t);
    }
    if (i1 < 0 || i1 + 1 >= static_cast<int>(fd.periods.size()) ||
        fd.periods[static_cast<std::size_t>(i1) + 1] != p[1]) {
      throw fda::validation_error(
          "pair must name two consecutive panel periods");
    }
    pair = i1;
  }
  ResolvedPair r;
  r.view = fd.filter_pair(pair);
  r.p1 = fd.periods[static_cast<std::size_t>(pair)];
  r.p2 = fd.periods[static_cast<std::size_t>(pair) + 1];
  return r;
}

Json dataset_inputs(const fda_dataset* ds) {
  return Json{{"input", ds->label},
              {"data_hash", ds->data_hash},
              {"columns", ds->columns}};
}

fda_result* finish(const std::string& command, Json inputs, Json result,
                   std::string csv) {
  const Json doc =
      fda::make_document(command, std::move(inputs), std::move(result));
  return new fda_result{fda::render_json(doc), std::move(csv)};
}

fda_result* analyze_dispatch(const fda_dataset* ds, const std::string& command,
                             const Json& o) {
  const fda::PanelDataset& panel = ds->panel;
  const fda::FdView fd = fda::first_differences(panel);
  Json inputs = dataset_inputs(ds);

  if (command == "balance") {
    check_keys(o, {"pair", "alpha", "vcov"});
    const ResolvedPair rp = resolve_pair(fd, o);
    const double alpha = alpha_from(o);
    const fda::VcovKind vk = vcov_from(o);
    inputs["pair"] = Json::array({rp.p1, rp.p2});
    inputs["alpha"] = alpha;
    inputs["vcov"] = vcov_name(vk);
    return finish(command, std::move(inputs),
                  to_json(fda::balance_test(rp.view, alpha, vk)), "");
  }

  if (command == "estimate") {
    check_keys(o, {"pair", "use-instrument", "vcov"});
    const ResolvedPair rp = resolve_pair(fd, o);
    const bool use_z = o.value("use-instrument", false);
    const fda::VcovKind vk = vcov_from(o);
    inputs["pair"] = Json::array({rp.p1, rp.p2});
    inputs["use-instrument"] = use_z;
    inputs["vcov"] = vcov_name(vk);
    return finish(command, std::move(inputs),
                  to_json(fda::fd_ols(rp.view, use_z, vk)), "");
  }

  if (command == "decompose") {
    check_keys(o, {"pair"});
    long long p1 = panel.periods[panel.periods.size() - 2];
    long long p2 = panel.periods.back();
    if (o.contains("pair")) {
      const auto p = o.at("pair").get<std::vector<long long>>();
      if (p.size() != 2) {
        throw fda::validation_error("pair must be [period1, period2]");
      }
      p1 = p[0];
      p2 = p[1];
    }
    inputs["pair"] = Json::array({p1, p2});
    const fda::PathWeights pw = fda::path_weights(
        panel, panel.period_index(p1), panel.period_index(p2));
    return finish(command, std::move(inputs), to_json(pw), "");
  }

  if (command == "weights") {
    check_keys(o, {"pair", "d1-bins", "x-grid"});
    const ResolvedPair rp = resolve_pair(fd, o);
    const int bins = o.value("d1-bins", 10);
    const int grid = o.value("x-grid", 50);
    inputs["pair"] = Json::array({rp.p1, rp.p2});
    inputs["d1-bins"] = bins;
    inputs["x-grid"] = grid;
    const fda::YitzhakiWeightGrid g =
        fda::yitzhaki_weights(rp.view, bins, grid);
    return finish(command, std::move(inputs), to_json(g), fda::weights_csv(g));
  }

  if (command == "ddml" || command == "stack" || command == "placebo") {
    std::vector<std::string> keys = with_learner_keys(
        {"pair", "alpha", "vcov", "folds", "seed", "threads", "with-hausman",
         "hausman", "bootstrap"});
    if (command == "ddml") keys.push_back("conditioning");
    check_keys(o, keys);

    const std::uint64_t seed = seed_from(o);
    const int L = folds_from(o);
    const fda::LearnerSpec ls = learner_from(o, seed);
    const fda::EstimatorOptions eopts = estimator_options_from(o, seed);
    const fda::FoldAssignment fa = fda::assign_folds(panel, L, seed);

    inputs["learner"] = learner_echo(ls);
    inputs["folds"] = L;
    inputs["seed"] = seed;
    inputs["alpha"] = eopts.alpha;
    inputs["vcov"] = vcov_name(eopts.vcov);
    inputs["hausman"] = hausman_echo(eopts);

    if (command == "ddml") {
      const ResolvedPair rp = resolve_pair(fd, o);
      const std::string cond = o.value("conditioning", std::string("d1"));
      fda::Conditioning c;
      if (cond == "d1") {
        c = fda::Conditioning::D1;
      } else if (cond == "d0d1") {
        c = fda::Conditioning::D0D1;
      } else {
        throw fda::validation_error("unknown conditioning '" + cond +
                                    "' (d1 | d0d1)");
      }
      inputs["pair"] = Json::array({rp.p1, rp.p2});
      inputs["conditioning"] = cond;
      return finish(command, std::move(inputs),
                    to_json(fda::ddml_beta_d1(rp.view, c, ls, fa, eopts)), "");
    }
    if (command == "stack") {
      if (o.contains("pair")) {
        throw fda::validation_error(
            "the stacked estimator pools every period pair; 'pair' does not "
            "apply");
      }
      return finish(command, std::move(inputs),
                    to_json(fda::stacked_ddml(fd, ls, fa, eopts)), "");
    }
    // placebo: optional restriction to one pair, otherwise every row that
    // carries a lagged outcome change.
    fda::FdView view = fd;
    if (o.contains("pair")) {
      const ResolvedPair rp = resolve_pair(fd, o);
      view = rp.view;
      inputs["pair"] = Json::array({rp.p1, rp.p2});
    } else {
      inputs["pair"] = Json(nullptr);
    }
    return finish(command, std::move(inputs),
                  to_json(fda::placebo_test(view, ls, fa, eopts)), "");
  }

  throw fda::validation_error(
      "unknown command '" + command +
      "' (balance | estimate | decompose | weights | ddml | stack | "
      "placebo)");
}

std::string panel_csv(const fda::PanelDataset& p) {
  std::ostringstream out;
  out << "unit,period,y,d\n";
  for (int g = 0; g < p.n_units(); ++g) {
    for (int t = 0; t < p.n_periods(); ++t) {
      out << p.units[static_cast<std::size_t>(g)] << ','
          << p.periods[static_cast<std::size_t>(t)] << ','
          << Json(p.yv(g, t)).dump() << ',' << Json(p.dv(g, t)).dump()
          << '\n';
    }
  }
  return out.str();
}

fda_result* simulate_dispatch(const std::string& config_text, const Json& o) {
  const fda::DgpSpec spec = fda::parse_dgp_config(config_text);
  const std::string action = o.value("action", std::string("draw"));
  const std::uint64_t seed = o.value("seed", spec.seed);

  Json inputs{{"config", config_text}, {"action", action}, {"seed", seed}};

  if (action == "draw") {
    check_keys(o, {"action", "seed"});
    const fda::GeneratedPanel gp = fda::generate(spec, seed);
    Json result{{"n_units", gp.panel.n_units()},
                {"n_periods", gp.panel.n_periods()},
                {"seed", seed}};
    return finish("simulate", std::move(inputs), std::move(result),
                  panel_csv(gp.panel));
  }

  if (action == "oracle") {
    check_keys(o, with_learner_keys({"action", "seed", "oracle", "reps",
                                     "tolerance", "rejection-bound", "folds",
                                     "threads", "keep-estimates"}));
    const std::string which = o.value("oracle", std::string(""));
    fda::Theorem th;
    if (which == "ovb") {
      th = fda::Theorem::Ovb;
    } else if (which == "path-weights") {
      th = fda::Theorem::PathWeights;
    } else if (which == "beta-d1") {
      th = fda::Theorem::BetaD1;
    } else if (which == "placebo") {
      th = fda::Theorem::Placebo;
    } else {
      throw fda::validation_error(
          "oracle must be one of ovb | path-weights | beta-d1 | placebo");
    }
    fda::OracleSettings st;
    st.n_reps = o.value("reps", 500);
    st.tolerance = o.value("tolerance", 0.02);
    st.rejection_bound = o.value("rejection-bound", 0.07);
    st.folds = o.value("folds", 5);
    st.threads = threads_from(o);
    st.keep_estimates = o.value("keep-estimates", true);
    st.learner = learner_from(o, seed);

    fda::DgpSpec run_spec = spec;
    run_spec.seed = seed;

    inputs["oracle"] = which;
    inputs["reps"] = st.n_reps;
    inputs["tolerance"] = st.tolerance;
    inputs["rejection-bound"] = st.rejection_bound;
    inputs["folds"] = st.folds;
    inputs["learner"] = learner_echo(st.learner);
    inputs["keep-estimates"] = st.keep_estimates;

    const fda::MonteCarloReport report = fda::run_oracle(th, run_spec, st);
    return finish("simulate", std::move(inputs), to_json(report),
                  fda::oracle_csv(report));
  }

  throw fda::validation_error("unknown action '" + action +
                              "' (draw | oracle)");
}

}  // namespace

extern "C" {

const char* fda_version(void) {
  static const std::string v = fda::version_string();
  return v.c_str();
}

const char* fda_last_error(void) { return t_last_error.c_str(); }

fda_status fda_dataset_load(const char* path, const char* options_json,
                            fda_dataset** out) {
  if (path == nullptr || out == nullptr) {
    return fail(FDA_ERR_USAGE, "null argument");
  }
  *out = nullptr;
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) {
      return fail(FDA_ERR_IO,
                  std::string("cannot open input file '") + path + "'");
    }
  }
  return guarded([&] {
    const fda::ColumnMap columns = columns_from(parse_options(options_json));
    *out = make_dataset(fda::load_panel_file(path, columns), path, columns);
  });
}

fda_status fda_dataset_load_buffer(const char* data, size_t len,
                                   const char* options_json,
                                   fda_dataset** out) {
  if (data == nullptr || out == nullptr) {
    return fail(FDA_ERR_USAGE, "null argument");
  }
  *out = nullptr;
  return guarded([&] {
    const fda::ColumnMap columns = columns_from(parse_options(options_json));
    *out = make_dataset(
        fda::load_panel_string(std::string(data, len), columns), "<buffer>",
        columns);
  });
}

fda_status fda_dataset_shape(const fda_dataset* ds, int* n_units,
                             int* n_periods, int* n_clusters) {
  if (ds == nullptr) return fail(FDA_ERR_USAGE, "null dataset handle");
  if (n_units != nullptr) *n_units = ds->panel.n_units();
  if (n_periods != nullptr) *n_periods = ds->panel.n_periods();
  if (n_clusters != nullptr) *n_clusters = ds->panel.n_clusters();
  t_last_error.clear();
  return FDA_OK;
}

void fda_dataset_free(fda_dataset* ds) { delete ds; }

fda_status fda_analyze(const fda_dataset* ds, const char* command,
                       const char* options_json, fda_result** out) {
  if (ds == nullptr || command == nullptr || out == nullptr) {
    return fail(FDA_ERR_USAGE, "null argument");
  }
  *out = nullptr;
  return guarded([&] {
    *out = analyze_dispatch(ds, command, parse_options(options_json));
  });
}

fda_status fda_simulate(const char* config_text, const char* options_json,
                        fda_result** out) {
  if (config_text == nullptr || out == nullptr) {
    return fail(FDA_ERR_USAGE, "null argument");
  }
  *out = nullptr;
  return guarded([&] {
    *out = simulate_dispatch(config_text, parse_options(options_json));
  });
}

const char* fda_result_json(const fda_result* result) {
  return result == nullptr ? nullptr : result->json.c_str();
}

const char* fda_result_csv(const fda_result* result) {
  return result == nullptr ? nullptr : result->csv.c_str();
}

void fda_result_free(fda_result* result) { delete result; }

}  // extern "C"

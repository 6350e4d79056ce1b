#include "report.hpp"

#include <iomanip>
#include <sstream>

namespace fda {

namespace {

// Shortest round-trip decimal form, shared by JSON and CSV output.
std::string num_str(double v) {
  const std::string s = Json(v).dump();
  return s == "null" ? "" : s;
}

Json fold_array(const std::vector<FoldDiagnostics>& folds) {
  Json arr = Json::array();
  for (const auto& f : folds) arr.push_back(to_json(f));
  return arr;
}

}  // namespace

Json to_json(const RegressionFit& fit) {
  Json coefs = Json::array();
  for (int j = 0; j < static_cast<int>(fit.coef.size()); ++j) {
    coefs.push_back(Json{{"name", fit.names[static_cast<std::size_t>(j)]},
                         {"estimate", fit.coef[j]},
                         {"se", fit.se(j)},
                         {"t", fit.tstat(j)},
                         {"p", fit.pvalue(j)}});
  }
  return Json{{"n", fit.n_obs},
              {"n_clusters", fit.n_clusters},
              {"rank", fit.rank},
              {"dof_correction", fit.dof_correction},
              {"coefficients", coefs}};
}

Json to_json(const HausmanResult& r) {
  return Json{{"statistic", r.statistic},
              {"difference", r.difference},
              {"se_difference", r.se_difference},
              {"p_value", r.p_value},
              {"bootstrap_used", r.bootstrap_used}};
}

Json to_json(const BalanceResult& r) {
  return Json{{"slope", r.slope},
              {"se", r.se},
              {"p_value", r.p_value},
              {"alpha", r.alpha},
              {"baseline_predicts_change", r.correlated},
              {"regression", to_json(r.fit)}};
}

Json to_json(const PathWeights& r) {
  return Json{{"period1", r.period1},
              {"period2", r.period2},
              {"omega1", r.omega1},
              {"omega2", r.omega2},
              {"var_d1", r.var_d1},
              {"var_d2", r.var_d2},
              {"cov_d12", r.cov_d12},
              {"any_negative", r.any_negative}};
}

Json to_json(const FoldDiagnostics& f) {
  return Json{{"fold", f.fold},
              {"n_train", f.n_train},
              {"n_test", f.n_test},
              {"train_mse", f.train_mse},
              {"lambda", f.lambda},
              {"sweeps", f.sweeps},
              {"gap", f.gap},
              {"selected", f.selected},
              {"mlp_final_loss", f.mlp_final_loss},
              {"mlp_iters", f.mlp_iters},
              {"warnings", f.warnings}};
}

Json to_json(const DdmlResult& r) {
  return Json{
      {"estimate", r.beta_d1},
      {"se", r.se},
      {"p_value", r.p_value},
      {"n", r.n},
      {"n_clusters", r.n_clusters},
      {"naive", Json{{"estimate", r.naive_beta}, {"se", r.naive_se}}},
      {"specification_test",
       r.hausman_computed ? to_json(r.hausman) : Json(nullptr)},
      {"learner",
       Json{{"description", r.learner}, {"conditioning", r.conditioning}}},
      {"diagnostics", Json{{"second_stage", to_json(r.fit)},
                           {"eta_folds", fold_array(r.eta_folds)},
                           {"gamma_folds", fold_array(r.gamma_folds)}}},
      {"provenance", Json{{"seed", r.seed}, {"folds", r.folds}}}};
}

Json to_json(const PlaceboResult& r) {
  return Json{
      {"naive", Json{{"slope", r.naive_slope},
                     {"se", r.naive_se},
                     {"p_value", r.naive_p},
                     {"reject", r.naive_reject}}},
      {"locally_robust", Json{{"slope", r.lr_slope},
                              {"se", r.lr_se},
                              {"p_value", r.lr_p},
                              {"reject", r.lr_reject}}},
      {"alpha", r.alpha},
      {"n", r.n},
      {"n_clusters", r.n_clusters},
      {"learner", r.learner},
      {"diagnostics", Json{{"eta_folds", fold_array(r.eta_folds)},
                           {"gamma_folds", fold_array(r.gamma_folds)}}},
      {"provenance", Json{{"seed", r.seed}, {"folds", r.folds}}}};
}

Json to_json(const YitzhakiWeightGrid& r) {
  Json bins = Json::array();
  for (const auto& b : r.bins) {
    bins.push_back(Json{{"d1_lo", b.d1_lo},
                        {"d1_hi", b.d1_hi},
                        {"d1_mean", b.d1_mean},
                        {"mass", b.mass},
                        {"x", b.x},
                        {"weight", b.weight},
                        {"normalized", b.normalized}});
  }
  return Json{{"bins", bins}, {"warnings", r.warnings}};
}

Json to_json(const OracleSeries& s) {
  return Json{{"name", s.name},
              {"target", s.target},
              {"method", s.method},
              {"mean", s.mean},
              {"sd", s.sd},
              {"mc_se", s.mc_se},
              {"tolerance", s.tolerance},
              {"bound_only", s.bound_only},
              {"pass", s.pass},
              {"estimates", s.estimates}};
}

Json to_json(const MonteCarloReport& r) {
  Json series = Json::array();
  for (const auto& s : r.series) series.push_back(to_json(s));
  return Json{{"oracle", r.theorem},
              {"n_reps", r.n_reps},
              {"n_units", r.n_units},
              {"seed", r.seed},
              {"pass", r.pass},
              {"series", series}};
}

Json make_document(const std::string& command, Json inputs, Json result) {
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0')
       << fnv1a(inputs.dump());
  return Json{{"tool", "fdaudit"},
              {"version", version_string()},
              {"command", command},
              {"inputs", std::move(inputs)},
              {"config_hash", hash.str()},
              {"result", std::move(result)}};
}

std::string render_json(const Json& doc) { return doc.dump(2) + "\n"; }

std::string weights_csv(const YitzhakiWeightGrid& g) {
  std::ostringstream out;
  out << "bin,d1_lo,d1_hi,d1_mean,mass,x,weight,normalized\n";
  for (std::size_t b = 0; b < g.bins.size(); ++b) {
    const auto& bin = g.bins[b];
    for (std::size_t k = 0; k < bin.x.size(); ++k) {
      out << (b + 1) << ',' << num_str(bin.d1_lo) << ',' << num_str(bin.d1_hi)
          << ',' << num_str(bin.d1_mean) << ',' << num_str(bin.mass) << ','
          << num_str(bin.x[k]) << ',' << num_str(bin.weight[k]) << ','
          << num_str(bin.normalized[k]) << '\n';
    }
  }
  return out.str();
}

std::string oracle_csv(const MonteCarloReport& r) {
  std::ostringstream out;
  out << "series,rep,estimate\n";
  for (const auto& s : r.series) {
    for (std::size_t i = 0; i < s.estimates.size(); ++i) {
      out << s.name << ',' << (i + 1) << ',' << num_str(s.estimates[i])
          << '\n';
    }
  }
  return out.str();
}

}  // namespace fda

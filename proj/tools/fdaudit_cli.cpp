// Command-line front end.  All computation goes through the shared-library
// C interface; this file only translates flags to option documents, writes
// report files, and prints a human summary derived from the canonical JSON.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdaudit.h"

namespace {

using Json = nlohmann::ordered_json;

constexpr int kExitNumeric = 1;
constexpr int kExitValidation = 2;
constexpr int kExitUsage = 64;

struct DatasetFlags {
  std::string input;
  std::string unit = "unit";
  std::string period = "period";
  std::string y = "y";
  std::string d = "d";
  std::string z;
  std::string weight;
  std::string cluster;
};

struct OutputFlags {
  std::string out_json;
  std::string out_csv;
  bool quiet = false;
};

struct RunFlags {
  int folds = 5;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  int threads = 1;
  std::string vcov = "cr1";
};

struct LearnerFlags {
  std::string learner = "lasso";
  int degree = 3;
  std::string lasso_penalty = "plugin";
  bool raw_lasso = false;  // predict from the penalized fit, skip the refit
  std::vector<int> mlp_hidden;
  int mlp_iters = 1000;
  double mlp_rate = 1.0;
};

struct HausmanFlags {
  std::string strategy = "bootstrap";
  int bootstrap = 399;
  bool skip = false;
};

struct PairFlag {
  std::string periods;  // "t1:t2"
};

void add_dataset_flags(CLI::App* cmd, DatasetFlags& f) {
  cmd->add_option("--input", f.input, "Panel file (CSV or TSV with header)")
      ->required();
  cmd->add_option("--unit", f.unit, "Unit id column (default: unit)");
  cmd->add_option("--period", f.period, "Period column (default: period)");
  cmd->add_option("--y", f.y, "Outcome column (default: y)");
  cmd->add_option("--d", f.d, "Treatment column (default: d)");
  cmd->add_option("--z", f.z, "Instrument column (optional)");
  cmd->add_option("--weight", f.weight, "Unit weight column (optional)");
  cmd->add_option("--cluster", f.cluster, "Cluster id column (optional)");
}

void add_output_flags(CLI::App* cmd, OutputFlags& f) {
  cmd->add_option("--out-json", f.out_json, "Write the JSON report here");
  cmd->add_option("--out-csv", f.out_csv, "Write the CSV rendering here");
  cmd->add_flag("--quiet", f.quiet, "Suppress the stdout summary");
}

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--folds", f.folds, "Cross-fitting folds (default: 5)");
  cmd->add_option("--seed", f.seed, "Master seed (default: 0)");
  cmd->add_option("--alpha", f.alpha, "Test level (default: 0.05)");
  cmd->add_option("--threads", f.threads, "Worker thread cap (default: 1)");
  cmd->add_option("--vcov", f.vcov,
                  "Clustered variance flavor: cr1 | cr0 (default: cr1)");
}

void add_learner_flags(CLI::App* cmd, LearnerFlags& f) {
  cmd->add_option("--learner", f.learner,
                  "Nuisance learner: lasso | mlp | poly-ols (default: lasso)");
  cmd->add_option("--degree", f.degree,
                  "Polynomial basis degree (default: 3)");
  cmd->add_option("--lasso-penalty", f.lasso_penalty,
                  "Penalty rule: plugin | cv:K | fixed:L (default: plugin)");
  cmd->add_flag("--raw-lasso", f.raw_lasso,
                "Predict from the penalized fit instead of the OLS refit");
  cmd->add_option("--mlp-hidden", f.mlp_hidden,
                  "Hidden layer widths, comma separated (default: 10)")
      ->delimiter(',');
  cmd->add_option("--mlp-iters", f.mlp_iters,
                  "Gradient steps (default: 1000)");
  cmd->add_option("--mlp-rate", f.mlp_rate, "Step scale (default: 1.0)");
}

void add_hausman_flags(CLI::App* cmd, HausmanFlags& f) {
  cmd->add_option("--hausman", f.strategy,
                  "Slope-comparison variance: bootstrap | influence");
  cmd->add_option("--bootstrap", f.bootstrap,
                  "Bootstrap replicates (default: 399)");
  cmd->add_flag("--no-hausman", f.skip, "Skip the naive-vs-adjusted test");
}

void add_pair_flag(CLI::App* cmd, PairFlag& f, const char* help) {
  cmd->add_option("--periods", f.periods, help);
}

// --- option-document assembly ----------------------------------------------

Json columns_json(const DatasetFlags& f) {
  Json o{{"unit", f.unit}, {"period", f.period}, {"y", f.y}, {"d", f.d}};
  if (!f.z.empty()) o["z"] = f.z;
  if (!f.weight.empty()) o["weight"] = f.weight;
  if (!f.cluster.empty()) o["cluster"] = f.cluster;
  return o;
}

bool parse_pair(const std::string& text, long long& p1, long long& p2) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) return false;
  try {
    std::size_t used = 0;
    p1 = std::stoll(text.substr(0, colon), &used);
    if (used != colon) return false;
    const std::string rest = text.substr(colon + 1);
    p2 = std::stoll(rest, &used);
    return used == rest.size();
  } catch (const std::exception&) {
    return false;
  }
}

int fill_pair(const PairFlag& f, Json& options) {
  if (f.periods.empty()) return 0;
  long long p1 = 0, p2 = 0;
  if (!parse_pair(f.periods, p1, p2)) {
    std::cerr << "error: --periods expects t1:t2\n";
    return kExitUsage;
  }
  options["pair"] = Json::array({p1, p2});
  return 0;
}

void fill_run(const RunFlags& f, Json& options) {
  options["folds"] = f.folds;
  options["seed"] = f.seed;
  options["alpha"] = f.alpha;
  options["threads"] = f.threads;
  options["vcov"] = f.vcov;
}

void fill_learner(const LearnerFlags& f, Json& options) {
  options["learner"] = f.learner;
  options["degree"] = f.degree;
  options["lasso-penalty"] = f.lasso_penalty;
  if (f.raw_lasso) options["post-lasso"] = false;
  if (!f.mlp_hidden.empty()) options["mlp-hidden"] = f.mlp_hidden;
  options["mlp-iters"] = f.mlp_iters;
  options["mlp-rate"] = f.mlp_rate;
}

void fill_hausman(const HausmanFlags& f, Json& options) {
  options["hausman"] = f.strategy;
  options["bootstrap"] = f.bootstrap;
  if (f.skip) options["with-hausman"] = false;
}

// --- result handling --------------------------------------------------------

int map_status(fda_status status) {
  switch (status) {
    case FDA_OK: return 0;
    case FDA_ERR_NUMERIC: return kExitNumeric;
    case FDA_ERR_VALIDATION: return kExitValidation;
    case FDA_ERR_IO: return kExitValidation;
    case FDA_ERR_USAGE: return kExitUsage;
  }
  return kExitNumeric;
}

int report_error(fda_status status) {
  std::cerr << "error: " << fda_last_error() << "\n";
  return map_status(status);
}

bool write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write '" << path << "'\n";
    return false;
  }
  out << content;
  return out.good();
}

std::string num(const Json& j, int precision = 4) {
  if (!j.is_number()) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, j.get<double>());
  return buf;
}

void print_fit_rows(const Json& fit) {
  std::size_t width = 0;
  for (const auto& c : fit.at("coefficients")) {
    width = std::max(width, c.at("name").get<std::string>().size());
  }
  for (const auto& c : fit.at("coefficients")) {
    const std::string name = c.at("name").get<std::string>();
    std::cout << "  " << name << std::string(width - name.size() + 2, ' ')
              << num(c.at("estimate")) << " (" << num(c.at("se")) << ")"
              << "  p = " << num(c.at("p"), 3) << "\n";
  }
  std::cout << "  N = " << fit.at("n").get<long long>()
            << ", clusters = " << fit.at("n_clusters").get<long long>()
            << "\n";
}

void print_summary(const Json& doc) {
  const std::string command = doc.at("command").get<std::string>();
  const Json& r = doc.at("result");

  if (command == "balance") {
    std::cout << "balance: treatment change on baseline level\n"
              << "  slope " << num(r.at("slope")) << " (" << num(r.at("se"))
              << "), p = " << num(r.at("p_value"), 3) << "\n"
              << "  baseline predicts change at alpha "
              << num(r.at("alpha"), 3) << ": "
              << (r.at("baseline_predicts_change").get<bool>() ? "yes" : "no")
              << "\n";
    print_fit_rows(r.at("regression"));
    return;
  }
  if (command == "estimate") {
    std::cout << "first-difference OLS (cluster-robust)\n";
    print_fit_rows(r);
    return;
  }
  if (command == "decompose") {
    std::cout << "slope decomposition across periods "
              << r.at("period1").get<long long>() << " and "
              << r.at("period2").get<long long>() << "\n"
              << "  omega[" << r.at("period1").get<long long>()
              << "] = " << num(r.at("omega1")) << ", omega["
              << r.at("period2").get<long long>()
              << "] = " << num(r.at("omega2")) << "\n"
              << "  var(D1) = " << num(r.at("var_d1")) << ", var(D2) = "
              << num(r.at("var_d2")) << ", cov = " << num(r.at("cov_d12"))
              << "\n";
    if (r.at("any_negative").get<bool>()) {
      std::cout << "  note: a weight is negative; the pooled slope is not a "
                   "convex average\n";
    }
    return;
  }
  if (command == "weights") {
    const auto& bins = r.at("bins");
    std::size_t grid = 0;
    if (!bins.empty()) grid = bins.front().at("x").size();
    std::cout << "treatment-level weight curves: " << bins.size()
              << " baseline bins x " << grid << " grid points\n";
    for (const auto& w : r.at("warnings")) {
      std::cout << "  warning: " << w.get<std::string>() << "\n";
    }
    std::cout << "  (write --out-csv to get the full grid)\n";
    return;
  }
  if (command == "ddml" || command == "stack") {
    std::cout << (command == "ddml"
                      ? "level-adjusted slope (cross-fitted)\n"
                      : "level-adjusted slope (cross-fitted, pooled FD periods)\n")
              << "  adjusted  " << num(r.at("estimate")) << " ("
              << num(r.at("se")) << "), p = " << num(r.at("p_value"), 3)
              << "\n"
              << "  naive     " << num(r.at("naive").at("estimate")) << " ("
              << num(r.at("naive").at("se")) << ")\n"
              << "  N = " << r.at("n").get<long long>() << ", clusters = "
              << r.at("n_clusters").get<long long>() << ", folds = "
              << r.at("provenance").at("folds").get<long long>()
              << ", learner: "
              << r.at("learner").at("description").get<std::string>() << "\n";
    const Json& h = r.at("specification_test");
    if (!h.is_null()) {
      std::cout << "  naive vs adjusted: diff " << num(h.at("difference"))
                << ", p = " << num(h.at("p_value"), 3) << "\n";
    }
    return;
  }
  if (command == "placebo") {
    auto line = [&](const char* label, const Json& b) {
      std::cout << "  " << label << " " << num(b.at("slope")) << " ("
                << num(b.at("se")) << "), p = " << num(b.at("p_value"), 3)
                << " -> " << (b.at("reject").get<bool>() ? "reject" : "pass")
                << "\n";
    };
    std::cout << "placebo: lagged outcome change on current treatment change "
                 "(level "
              << num(r.at("alpha"), 3) << ")\n";
    line("naive         ", r.at("naive"));
    line("locally robust", r.at("locally_robust"));
    std::cout << "  N = " << r.at("n").get<long long>() << ", clusters = "
              << r.at("n_clusters").get<long long>() << "\n";
    return;
  }
  if (command == "simulate") {
    if (r.contains("series")) {
      std::cout << "oracle " << r.at("oracle").get<std::string>() << ": "
                << r.at("n_reps").get<long long>() << " replications, "
                << r.at("n_units").get<long long>() << " units\n";
      for (const auto& s : r.at("series")) {
        std::cout << "  " << s.at("name").get<std::string>() << ": mean "
                  << num(s.at("mean"), 6) << " vs target "
                  << num(s.at("target"), 6);
        if (s.at("bound_only").get<bool>()) {
          std::cout << " (upper bound)";
        } else {
          std::cout << " (band +/-" << num(s.at("tolerance"), 3)
                    << ", mc se " << num(s.at("mc_se"), 3) << ")";
        }
        std::cout << (s.at("pass").get<bool>() ? "  PASS" : "  FAIL") << "\n";
      }
      std::cout << "overall: "
                << (r.at("pass").get<bool>() ? "PASS" : "FAIL") << "\n";
    } else {
      std::cout << "simulated panel: " << r.at("n_units").get<long long>()
                << " units x " << r.at("n_periods").get<long long>()
                << " periods (seed " << r.at("seed").get<std::uint64_t>()
                << ")\n  (write --out-csv to get the panel)\n";
    }
    return;
  }
  // Unknown command in the document; print nothing beyond the JSON path.
}

int emit(fda_result* result, const OutputFlags& out) {
  const std::string json = fda_result_json(result);
  const std::string csv = fda_result_csv(result);
  int code = 0;
  if (!out.out_json.empty() && !write_file(out.out_json, json)) {
    code = kExitValidation;
  }
  if (code == 0 && !out.out_csv.empty()) {
    if (csv.empty()) {
      std::cerr << "error: this command has no CSV rendering\n";
      code = kExitValidation;
    } else if (!write_file(out.out_csv, csv)) {
      code = kExitValidation;
    }
  }
  if (code == 0 && !out.quiet) {
    print_summary(Json::parse(json));
  }
  fda_result_free(result);
  return code;
}

int run_analysis(const std::string& command, const DatasetFlags& data,
                 const Json& options, const OutputFlags& out) {
  fda_dataset* ds = nullptr;
  fda_status status = fda_dataset_load(data.input.c_str(),
                                       columns_json(data).dump().c_str(), &ds);
  if (status != FDA_OK) return report_error(status);

  fda_result* result = nullptr;
  status = fda_analyze(ds, command.c_str(), options.dump().c_str(), &result);
  fda_dataset_free(ds);
  if (status != FDA_OK) return report_error(status);
  return emit(result, out);
}

int run_simulate(const std::string& config_path, const Json& options,
                 const OutputFlags& out) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open simulation config '" << config_path
              << "'\n";
    return kExitValidation;
  }
  std::stringstream buf;
  buf << in.rdbuf();

  fda_result* result = nullptr;
  const fda_status status =
      fda_simulate(buf.str().c_str(), options.dump().c_str(), &result);
  if (status != FDA_OK) return report_error(status);
  return emit(result, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fdaudit " + std::string(fda_version()) +
      " — audits first-difference panel regressions whose treatment change "
      "is correlated with the baseline treatment level, and estimates a "
      "level-adjusted slope by cross-fitting."};
  app.require_subcommand(1);

  DatasetFlags data;
  OutputFlags out;
  RunFlags run;
  LearnerFlags learner;
  HausmanFlags hausman;
  PairFlag pair;

  double balance_alpha = 0.05;
  std::string balance_vcov = "cr1";
  CLI::App* c_balance =
      app.add_subcommand("balance", "Treatment change on baseline level");
  add_dataset_flags(c_balance, data);
  add_output_flags(c_balance, out);
  add_pair_flag(c_balance, pair, "Consecutive period pair t1:t2");
  c_balance->add_option("--alpha", balance_alpha, "Test level");
  c_balance->add_option("--vcov", balance_vcov, "cr1 | cr0");

  bool use_instrument = false;
  CLI::App* c_estimate =
      app.add_subcommand("estimate", "First-difference OLS slope");
  add_dataset_flags(c_estimate, data);
  add_output_flags(c_estimate, out);
  add_pair_flag(c_estimate, pair, "Consecutive period pair t1:t2");
  c_estimate->add_flag("--use-instrument", use_instrument,
                       "Regress on the instrument change (reduced form)");
  c_estimate->add_option("--vcov", balance_vcov, "cr1 | cr0");

  CLI::App* c_decompose = app.add_subcommand(
      "decompose", "Variance weights attaching the FD slope to the periods");
  add_dataset_flags(c_decompose, data);
  add_output_flags(c_decompose, out);
  add_pair_flag(c_decompose, pair, "Period pair t1:t2 (any two periods)");

  int d1_bins = 10;
  int x_grid = 50;
  CLI::App* c_weights = app.add_subcommand(
      "weights", "Within-bin treatment-level weight curves");
  add_dataset_flags(c_weights, data);
  add_output_flags(c_weights, out);
  add_pair_flag(c_weights, pair, "Consecutive period pair t1:t2");
  c_weights->add_option("--d1-bins", d1_bins,
                        "Baseline-level bins (default: 10)");
  c_weights->add_option("--x-grid", x_grid,
                        "Evaluation points (default: 50)");

  std::string conditioning = "d1";
  CLI::App* c_ddml = app.add_subcommand(
      "ddml", "Cross-fitted level-adjusted slope with naive comparison");
  add_dataset_flags(c_ddml, data);
  add_output_flags(c_ddml, out);
  add_pair_flag(c_ddml, pair, "Consecutive period pair t1:t2");
  add_run_flags(c_ddml, run);
  add_learner_flags(c_ddml, learner);
  add_hausman_flags(c_ddml, hausman);
  c_ddml->add_option("--conditioning", conditioning,
                     "Nuisance conditioning set: d1 | d0d1 (default: d1)");

  CLI::App* c_stack = app.add_subcommand(
      "stack", "Pooled multi-period version of ddml");
  add_dataset_flags(c_stack, data);
  add_output_flags(c_stack, out);
  add_run_flags(c_stack, run);
  add_learner_flags(c_stack, learner);
  add_hausman_flags(c_stack, hausman);

  CLI::App* c_placebo = app.add_subcommand(
      "placebo", "Lagged outcome change on current treatment change");
  add_dataset_flags(c_placebo, data);
  add_output_flags(c_placebo, out);
  add_pair_flag(c_placebo, pair,
                "Restrict to one period pair t1:t2 (default: all usable)");
  add_run_flags(c_placebo, run);
  add_learner_flags(c_placebo, learner);

  std::string config_path;
  std::string oracle;
  int reps = 500;
  double tolerance = 0.02;
  double rejection_bound = 0.07;
  bool drop_estimates = false;
  CLI::App* c_simulate = app.add_subcommand(
      "simulate", "Draw a synthetic panel, or run a replication study");
  add_output_flags(c_simulate, out);
  c_simulate->add_option("--config", config_path,
                         "Generating-process description file")
      ->required();
  c_simulate
      ->add_option("--oracle", oracle,
                   "Run a replication study instead of drawing one panel: "
                   "ovb | path-weights | beta-d1 | placebo")
      ->expected(1);
  c_simulate->add_option("--reps", reps, "Replications (default: 500)");
  c_simulate->add_option("--tolerance", tolerance,
                         "Two-sided band component (default: 0.02)");
  c_simulate->add_option("--rejection-bound", rejection_bound,
                         "Upper bound for rejection-rate series");
  c_simulate->add_option("--folds", run.folds, "Cross-fitting folds");
  c_simulate->add_option("--seed", run.seed,
                         "Master seed (default: config seed)");
  c_simulate->add_option("--threads", run.threads, "Worker thread cap");
  c_simulate->add_flag("--drop-estimates", drop_estimates,
                       "Omit per-replication values from the report");
  add_learner_flags(c_simulate, learner);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  Json options = Json::object();

  if (*c_balance) {
    const int rc = fill_pair(pair, options);
    if (rc != 0) return rc;
    options["alpha"] = balance_alpha;
    options["vcov"] = balance_vcov;
    return run_analysis("balance", data, options, out);
  }
  if (*c_estimate) {
    const int rc = fill_pair(pair, options);
    if (rc != 0) return rc;
    if (use_instrument) options["use-instrument"] = true;
    options["vcov"] = balance_vcov;
    return run_analysis("estimate", data, options, out);
  }
  if (*c_decompose) {
    const int rc = fill_pair(pair, options);
    if (rc != 0) return rc;
    return run_analysis("decompose", data, options, out);
  }
  if (*c_weights) {
    const int rc = fill_pair(pair, options);
    if (rc != 0) return rc;
    options["d1-bins"] = d1_bins;
    options["x-grid"] = x_grid;
    return run_analysis("weights", data, options, out);
  }
  if (*c_ddml || *c_stack || *c_placebo) {
    const std::string command = *c_ddml ? "ddml" : (*c_stack ? "stack"
                                                             : "placebo");
    if (command != "stack") {
      const int rc = fill_pair(pair, options);
      if (rc != 0) return rc;
    }
    fill_run(run, options);
    fill_learner(learner, options);
    if (command != "placebo") fill_hausman(hausman, options);
    if (command == "ddml") options["conditioning"] = conditioning;
    return run_analysis(command, data, options, out);
  }
  if (*c_simulate) {
    if (oracle.empty()) {
      options["action"] = "draw";
      if (c_simulate->count("--seed") > 0) options["seed"] = run.seed;
    } else {
      options["action"] = "oracle";
      options["oracle"] = oracle;
      options["reps"] = reps;
      options["tolerance"] = tolerance;
      options["rejection-bound"] = rejection_bound;
      options["folds"] = run.folds;
      options["threads"] = run.threads;
      if (drop_estimates) options["keep-estimates"] = false;
      if (c_simulate->count("--seed") > 0) options["seed"] = run.seed;
      fill_learner(learner, options);
    }
    return run_simulate(config_path, options, out);
  }
  return kExitUsage;
}

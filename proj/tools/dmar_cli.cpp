// Command-line front end: simulation tables, estimation on user CSV data,
// and propensity-offset calibration.
//
// Exit codes: 0 success, 2 usage/validation, 3 data/degeneracy, 4 numerical.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "dmar/csv_io.hpp"
#include "dmar/estimators.hpp"
#include "dmar/simulate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int default_workers() {
  if (const char* env = std::getenv("DMAR_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Expands "--config <file>" into --key value tokens inserted right after the
// subcommand name. Explicit flags come later on the line and win because all
// options take the last value given.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
    } else {
      continue;
    }
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    std::vector<std::string> injected;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t");
      line = line.substr(first, last - first + 1);
      if (line.empty() || line[0] == '#' || line[0] == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("config line " + std::to_string(line_no) +
                                    ": expected key=value");
      injected.push_back("--" + line.substr(0, eq));
      injected.push_back(line.substr(eq + 1));
    }
    // insert after the subcommand token so the keys bind to its options
    args.insert(args.begin() + (args.empty() ? 0 : 1), injected.begin(), injected.end());
    break;
  }
  return args;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct SimulateArgs {
  std::string dgp = "a";
  std::size_t n = 10000;
  std::size_t d = 51;
  int s_alpha = 3;
  int s_beta = 3;
  double gamma = 0.1;
  double gamma0 = -1.0;  // <0 means same as gamma
  int reps = 200;
  std::string estimators = "oracle,mcar,ss-lasso,brss";
  std::uint64_t seed = 0;
  std::string out;
  int workers = 0;
  int k_folds = 2;
  int cf_repeats = 1;
  int cv_folds = 5;
  double level = 0.95;
};

int cmd_simulate(const SimulateArgs& a) {
  dmar::simulate::DgpSpec spec;
  std::vector<dmar::simulate::EstimatorKind> kinds;
  try {
    spec.dgp = dmar::simulate::parse_dgp(a.dgp);
    spec.n = a.n;
    spec.d = a.d;
    spec.s_alpha = a.s_alpha;
    spec.s_beta = a.s_beta;
    spec.gamma1 = a.gamma;
    spec.gamma0 = a.gamma0 < 0 ? a.gamma : a.gamma0;
    spec.seed = a.seed;
    dmar::simulate::validate_spec(spec);
    for (const std::string& name : split_csv_list(a.estimators))
      kinds.push_back(dmar::simulate::parse_estimator(name));
    if (kinds.empty()) throw dmar::data_error("no estimators given");
    if (a.reps < 1) throw dmar::data_error("--reps must be >= 1");
    if (!(a.level > 0.0 && a.level < 1.0)) throw dmar::data_error("--level must lie in (0,1)");
    if (a.k_folds < 2) throw dmar::data_error("--k-folds must be >= 2");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  dmar::simulate::RunConfig cfg;
  cfg.k_folds = a.k_folds;
  cfg.n_repeats = a.cf_repeats;
  cfg.cv_folds = a.cv_folds;
  cfg.ci_level = a.level;
  const int workers = a.workers > 0 ? a.workers : default_workers();

  dmar::simulate::MetricsTable table =
      dmar::simulate::run_replications(spec, kinds, a.reps, a.seed, workers, cfg);

  std::cout << dmar::csv::metrics_text(table);
  if (!a.out.empty()) {
    dmar::csv::write_file(a.out, dmar::csv::metrics_csv(table));
    std::string txt = a.out;
    const std::size_t dot = txt.rfind('.');
    txt = (dot == std::string::npos ? txt : txt.substr(0, dot)) + ".txt";
    dmar::csv::write_file(txt, dmar::csv::metrics_text(table));
  }
  if (!table.valid) {
    std::cerr << "error: more than 2% of replications failed; table invalid\n";
    return kExitData;
  }
  return kExitOk;
}

struct EstimateArgs {
  std::string in;
  std::string method = "ss-lasso";
  int k_folds = 2;
  int cf_repeats = 1;
  int cv_folds = 5;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::string out;
};

int cmd_estimate(const EstimateArgs& a) {
  if (!(a.level > 0.0 && a.level < 1.0) || a.k_folds < 2 || a.cf_repeats < 1 ||
      a.cv_folds < 2 ||
      (a.method != "ss-lasso" && a.method != "brss" && a.method != "mcar")) {
    std::cerr << "error: invalid flags (method must be ss-lasso, brss or mcar)\n";
    return kExitUsage;
  }
  dmar::AteReport report;
  try {
    const dmar::Dataset ds = dmar::csv::load_dataset(a.in);
    if (a.method == "brss") {
      dmar::estimators::BrssOptions opt;
      opt.cv_folds = a.cv_folds;
      report = dmar::estimators::brss_ate(ds, a.seed, opt, a.level);
    } else {
      dmar::nuisance::LearnerSpec spec;
      spec.or_method = dmar::nuisance::OrMethod::lasso_linear;
      spec.ps_method = a.method == "mcar" ? dmar::nuisance::PsMethod::constant_mcar
                                          : dmar::nuisance::PsMethod::offset_logistic_direct;
      spec.cv_folds = a.cv_folds;
      report = dmar::estimators::dr_dmar_ate(ds, a.k_folds, spec, a.seed, a.cf_repeats, a.level);
    }
  } catch (const dmar::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  std::cout << dmar::csv::report_summary(report, a.method);
  if (!a.out.empty()) dmar::csv::write_file(a.out, dmar::csv::report_kv(report, a.method));
  return kExitOk;
}

struct CalibrateArgs {
  std::string dgp = "a";
  double gamma = 0.1;
  double gamma0 = -1.0;
  std::size_t d = 51;
  int s_alpha = 3;
  int s_beta = 3;
  std::uint64_t seed = 0;
  std::size_t draws = 1000000;
  double tol = 2e-3;
};

int cmd_calibrate(const CalibrateArgs& a) {
  dmar::simulate::DgpSpec spec;
  try {
    spec.dgp = dmar::simulate::parse_dgp(a.dgp);
    if (spec.dgp == dmar::simulate::Dgp::d || spec.dgp == dmar::simulate::Dgp::e)
      throw dmar::data_error("calibration applies to DGPs a-c only");
    spec.n = 1;
    spec.d = a.d;
    spec.s_alpha = a.s_alpha;
    spec.s_beta = a.s_beta;
    spec.gamma1 = a.gamma;
    spec.gamma0 = a.gamma0 < 0 ? a.gamma : a.gamma0;
    spec.seed = a.seed;
    dmar::simulate::validate_spec(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    const dmar::simulate::TruthOracle oracle = dmar::simulate::build_oracle(spec);
    // realized means on fresh draws
    dmar::Rng rng(dmar::derive_seed(spec.seed, 0xFE5));
    const dmar::Matrix fresh = dmar::simulate::gen_covariates(a.draws, spec.d, rng);
    double m1 = 0.0, m0 = 0.0;
    for (std::size_t i = 0; i < fresh.n_rows; ++i) {
      m1 += oracle.product_ps(1, fresh.row_span(i));
      m0 += oracle.product_ps(0, fresh.row_span(i));
    }
    m1 /= static_cast<double>(fresh.n_rows);
    m0 /= static_cast<double>(fresh.n_rows);
    std::printf("beta_n_1 %.6g\n", oracle.beta1[0]);
    std::printf("beta_n_0 %.6g\n", oracle.beta0[0]);
    std::printf("realized_gamma_1 %.6g (target %.6g)\n", m1, spec.gamma1);
    std::printf("realized_gamma_0 %.6g (target %.6g)\n", m0, spec.gamma0);
  } catch (const dmar::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised doubly robust ATE estimation under decaying labeling"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* s = app.add_subcommand("simulate", "run a Monte Carlo coverage study");
  s->option_defaults()->take_last();
  s->add_option("--dgp", sim.dgp, "generating process: a|b|c|d|e");
  s->add_option("--n", sim.n, "sample size");
  s->add_option("--d", sim.d, "covariate dimension incl. intercept");
  s->add_option("--s-alpha", sim.s_alpha, "regression sparsity");
  s->add_option("--s-beta", sim.s_beta, "propensity sparsity");
  s->add_option("--gamma", sim.gamma, "target labeled-arm fraction");
  s->add_option("--gamma0", sim.gamma0, "arm-0 target when different");
  s->add_option("--reps", sim.reps, "number of replications");
  s->add_option("--estimators", sim.estimators, "comma list: oracle,mcar,ss-lasso,brss");
  s->add_option("--seed", sim.seed, "base seed");
  s->add_option("--out", sim.out, "metrics CSV path (a .txt twin is also written)");
  s->add_option("--workers", sim.workers, "worker threads (default: DMAR_WORKERS or hardware)");
  s->add_option("--k-folds", sim.k_folds, "cross-fitting folds for the general estimator");
  s->add_option("--cf-repeats", sim.cf_repeats, "cross-fit replications averaged per estimate");
  s->add_option("--cv-folds", sim.cv_folds, "lambda cross-validation folds");
  s->add_option("--level", sim.level, "confidence level");
  std::string cfg_sink;
  s->add_option("--config", cfg_sink, "key=value file merged with flags winning");

  EstimateArgs est;
  CLI::App* e = app.add_subcommand("estimate", "estimate the ATE from a CSV file");
  e->option_defaults()->take_last();
  e->add_option("--in", est.in, "input CSV (header r,t,y,x1,...,xd; optional rt)")->required();
  e->add_option("--method", est.method, "ss-lasso | brss | mcar");
  e->add_option("--k-folds", est.k_folds, "cross-fitting folds");
  e->add_option("--cf-repeats", est.cf_repeats, "cross-fit replications averaged");
  e->add_option("--cv-folds", est.cv_folds, "lambda cross-validation folds");
  e->add_option("--seed", est.seed, "seed");
  e->add_option("--level", est.level, "confidence level");
  e->add_option("--out", est.out, "report CSV path (key,value rows)");
  e->add_option("--config", cfg_sink, "key=value file merged with flags winning");

  CalibrateArgs cal;
  CLI::App* c = app.add_subcommand("calibrate", "calibrate propensity offsets for a DGP");
  c->option_defaults()->take_last();
  c->add_option("--dgp", cal.dgp, "generating process: a|b|c");
  c->add_option("--gamma", cal.gamma, "target labeled-arm fraction");
  c->add_option("--gamma0", cal.gamma0, "arm-0 target when different");
  c->add_option("--d", cal.d, "covariate dimension incl. intercept");
  c->add_option("--s-alpha", cal.s_alpha, "regression sparsity");
  c->add_option("--s-beta", cal.s_beta, "propensity sparsity");
  c->add_option("--seed", cal.seed, "seed");
  c->add_option("--draws", cal.draws, "Monte Carlo draws");
  c->add_option("--tol", cal.tol, "calibration tolerance");
  c->add_option("--config", cfg_sink, "key=value file merged with flags winning");

  std::vector<std::string> args;
  try {
    args = expand_config_args(argc, argv);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  }
  std::reverse(args.begin(), args.end());  // App::parse(vector) takes reversed args
  try {
    app.parse(args);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (e->parsed()) return cmd_estimate(est);
    if (c->parsed()) return cmd_calibrate(cal);
  } catch (const dmar::data_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

// Command-line front end for consensus-based sampling and optimization.
//
// Subcommands:
//   optimize  one CBS run in optimization mode; trajectory CSV + summary JSON
//   sample    one CBS run in sampling mode; adds final-ensemble CSV + moments
//   theory    exact Gaussian moment recursions/flows over a parameter grid
//   bench     success-rate matrix over (objective, b, alpha, J)
//
// All numeric CSV output uses 17 significant digits, comma separators and LF
// line endings, so reruns with the same seed are byte-identical. Exit codes:
// 0 success, 1 usage or configuration error, 2 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cbs/bench.hpp"
#include "cbs/config.hpp"
#include "cbs/engine.hpp"
#include "cbs/gaussian.hpp"
#include "cbs/moments.hpp"
#include "cbs/objectives.hpp"
#include "cbs/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
  if (!out) throw cbs::Error("cannot open output file: " + path.string());
  return out;
}

void write_csv_row(std::ofstream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

std::string g17(double x) { return cbs::format_g17(x); }

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

const char* stop_reason_name(cbs::StopReason reason) {
  return reason == cbs::StopReason::CovarianceCollapse ? "CovarianceCollapse"
                                                       : "MaxIters";
}

cbs::Mode parse_mode(const std::string& mode) {
  if (mode == "sampling") return cbs::Mode::Sampling;
  if (mode == "optimization") return cbs::Mode::Optimization;
  throw cbs::ConfigInvalidError("mode must be 'sampling' or 'optimization'");
}

cbs::CbsConfig to_engine_config(const cbs::ExperimentConfig& config) {
  cbs::CbsConfig engine;
  engine.alpha = config.alpha;
  engine.beta = config.beta;
  engine.mode = parse_mode(config.mode);
  engine.adaptive_beta = config.adaptive_beta;
  engine.eta = config.eta;
  engine.beta_max = config.beta_max;
  engine.max_iters = config.iters;
  engine.cov_frobenius_tol = config.tol;
  engine.seed = config.seed;
  engine.record_trajectory = true;
  engine.eval_threads = std::max(1, config.threads);
  return engine;
}

void check_particles(const cbs::ExperimentConfig& config) {
  if (config.particles < 1) {
    throw cbs::ConfigInvalidError("J must be at least 1");
  }
}

void write_trajectory_csv(const fs::path& path, const cbs::RunResult& result,
                          Eigen::Index d) {
  std::ofstream out = open_output(path);
  std::vector<std::string> header{"iter"};
  for (Eigen::Index i = 0; i < d; ++i) {
    header.push_back("mean_" + std::to_string(i + 1));
  }
  header.push_back("cov_frobenius");
  header.push_back("beta");
  write_csv_row(out, header);
  for (const cbs::TrajectoryPoint& p : result.trajectory) {
    std::vector<std::string> row{std::to_string(p.iteration)};
    for (Eigen::Index i = 0; i < d; ++i) row.push_back(g17(p.mean(i)));
    row.push_back(g17(p.cov_frobenius));
    row.push_back(g17(p.beta));
    write_csv_row(out, row);
  }
}

cbs::RunResult run_single(const cbs::ExperimentConfig& config,
                          const cbs::Objective& objective) {
  check_particles(config);
  const Eigen::MatrixXd initial = cbs::gaussian_ensemble(
      cbs::derive_seed(config.seed, kInitStream), config.particles,
      objective.dim, config.init_std);
  return cbs::run(initial, objective, to_engine_config(config));
}

int cmd_optimize(const cbs::ExperimentConfig& config) {
  if (config.mode != "optimization") {
    throw cbs::ConfigInvalidError("optimize subcommand requires optimization mode");
  }
  const cbs::Objective objective =
      cbs::make_objective(config.objective, config.d, config.b);
  const cbs::RunResult result = run_single(config, objective);
  const Eigen::VectorXd mean =
      cbs::ensemble_moments(result.final_ensemble).mean;

  const fs::path out_dir(config.out);
  write_trajectory_csv(out_dir / "trajectory.csv", result, objective.dim);

  json summary;
  summary["objective"] = objective.name;
  summary["final_mean"] = vector_to_json(mean);
  summary["iterations"] = result.iterations;
  summary["stop_reason"] = stop_reason_name(result.stop_reason);
  summary["beta_clamped_iterations"] = result.beta_clamped_iterations;
  summary["seed"] = config.seed;
  if (objective.minimizer) {
    summary["final_error_inf"] =
        (mean - *objective.minimizer).lpNorm<Eigen::Infinity>();
  }
  open_output(out_dir / "summary.json") << summary.dump(2) << '\n';

  std::cout << "optimize: " << result.iterations << " iterations, "
            << stop_reason_name(result.stop_reason) << '\n';
  return 0;
}

int cmd_sample(const cbs::ExperimentConfig& config) {
  if (config.mode != "sampling") {
    throw cbs::ConfigInvalidError("sample subcommand requires sampling mode");
  }
  const cbs::Objective objective =
      cbs::make_objective(config.objective, config.d, config.b);
  const cbs::RunResult result = run_single(config, objective);
  const cbs::WeightedMoments<double> moments =
      cbs::ensemble_moments(result.final_ensemble);

  const fs::path out_dir(config.out);
  write_trajectory_csv(out_dir / "trajectory.csv", result, objective.dim);

  {
    std::ofstream out = open_output(out_dir / "ensemble.csv");
    std::vector<std::string> header;
    for (Eigen::Index i = 0; i < objective.dim; ++i) {
      header.push_back("theta_" + std::to_string(i + 1));
    }
    write_csv_row(out, header);
    for (Eigen::Index j = 0; j < result.final_ensemble.rows(); ++j) {
      std::vector<std::string> row;
      for (Eigen::Index i = 0; i < objective.dim; ++i) {
        row.push_back(g17(result.final_ensemble(j, i)));
      }
      write_csv_row(out, row);
    }
  }

  json moments_json;
  moments_json["objective"] = objective.name;
  moments_json["iterations"] = result.iterations;
  moments_json["mean"] = vector_to_json(moments.mean);
  moments_json["covariance"] = matrix_to_json(moments.covariance);
  moments_json["seed"] = config.seed;
  if (config.objective == "elliptic-2d") {
    Eigen::VectorXd ref_mean;
    Eigen::MatrixXd ref_cov;
    cbs::elliptic_2d_reference(ref_mean, ref_cov);
    moments_json["reference_mean"] = vector_to_json(ref_mean);
    moments_json["reference_covariance"] = matrix_to_json(ref_cov);
  }
  open_output(out_dir / "moments.json") << moments_json.dump(2) << '\n';

  std::cout << "sample: " << result.iterations << " iterations\n";
  return 0;
}

struct TheoryCase {
  std::string mode;
  double alpha = 0;
  double beta = 1;
  int d = 1;
};

// Deterministic random instance (C0, a, A, m0) for one grid case.
void theory_instance(std::uint64_t seed, int d, cbs::GaussianState<double>& state,
                     cbs::GaussianTarget<double>& target) {
  const Eigen::MatrixXd g1 = cbs::standard_normal_matrix(seed, d, d);
  const Eigen::MatrixXd g2 = cbs::standard_normal_matrix(seed + 1, d, d);
  target.A = Eigen::MatrixXd::Identity(d, d) + 0.2 * (g1 * g1.transpose()) / d;
  state.C = Eigen::MatrixXd::Identity(d, d) + 0.2 * (g2 * g2.transpose()) / d;
  state.C *= 2.5;
  target.a = cbs::standard_normal_matrix(seed + 2, d, 1);
  state.m = target.a + cbs::standard_normal_matrix(seed + 3, d, 1);
}

int cmd_theory(const cbs::ExperimentConfig& config) {
  std::vector<std::string> modes;
  if (config.mode == "both") {
    modes = {"sampling", "optimization"};
  } else {
    modes = {config.mode};
  }
  if (config.alpha_list.empty() || config.beta_list.empty() ||
      config.d_list.empty() || modes.empty()) {
    throw cbs::ConfigInvalidError("theory grid is empty");
  }

  const fs::path out_dir(config.out);
  json rates = json::array();
  int case_index = 0;
  for (const std::string& mode_name : modes) {
    for (double alpha : config.alpha_list) {
      for (double beta : config.beta_list) {
        for (int d : config.d_list) {
          const cbs::Mode mode = parse_mode(mode_name);
          cbs::GaussianState<double> state;
          cbs::GaussianTarget<double> target;
          theory_instance(config.seed + 7919 * case_index, d, state, target);
          const double k0 = cbs::k0_constant<double>(state.C, target.A);
          const double lambda = cbs::lambda_for(mode, beta);
          const bool continuous = alpha >= 1.0;

          std::vector<double> ticks, mean_dev, cov_dev;
          if (continuous) {
            const auto record = [&](double t, const cbs::GaussianState<double>& s) {
              ticks.push_back(t);
              mean_dev.push_back(cbs::mahalanobis_norm<double>(s.m - target.a, target.A));
              cov_dev.push_back(
                  mode == cbs::Mode::Sampling
                      ? cbs::relative_operator_norm<double>(s.C - target.A, target.A)
                      : cbs::frobenius_norm(s.C));
            };
            record(0.0, state);
            cbs::continuous_moment_flow<double>(state, target, lambda, beta,
                                                config.t_end, config.dt, record);
          } else {
            cbs::GaussianState<double> s = state;
            for (int n = 0; n <= config.steps; ++n) {
              ticks.push_back(n);
              mean_dev.push_back(cbs::mahalanobis_norm<double>(s.m - target.a, target.A));
              cov_dev.push_back(
                  mode == cbs::Mode::Sampling
                      ? cbs::relative_operator_norm<double>(s.C - target.A, target.A)
                      : cbs::frobenius_norm(s.C));
              if (n < config.steps) {
                s = cbs::discrete_moment_step<double>(s, alpha, lambda, beta, target);
              }
            }
          }

          char name[128];
          std::snprintf(name, sizeof(name), "theory_%s_a%g_b%g_d%d.csv",
                        mode_name.c_str(), alpha, beta, d);
          std::ofstream out = open_output(out_dir / name);
          write_csv_row(out, {continuous ? "t" : "n", "mean_dev_a", "cov_dev_a"});
          for (std::size_t i = 0; i < ticks.size(); ++i) {
            write_csv_row(out, {g17(ticks[i]), g17(mean_dev[i]), g17(cov_dev[i])});
          }

          // Fit over the second half of the horizon, guarding underflow.
          const auto window = [&](const std::vector<double>& y) {
            std::size_t hi = y.size() - 1;
            while (hi > 1 && y[hi] < 1e-280) --hi;
            std::size_t lo = hi / 2;
            return std::pair<std::size_t, std::size_t>(lo, hi);
          };
          const cbs::AlphaCase alpha_case =
              continuous ? cbs::AlphaCase::One
                         : (alpha == 0.0 ? cbs::AlphaCase::Zero
                                         : cbs::AlphaCase::Open01);
          const cbs::RateEnvelope envelope =
              cbs::rate_envelope(mode, alpha_case, alpha, beta, k0);

          json entry;
          entry["mode"] = mode_name;
          entry["alpha"] = alpha;
          entry["beta"] = beta;
          entry["d"] = d;
          entry["k0"] = k0;
          const auto fit_one = [&](const std::vector<double>& y, bool is_mean) {
            const auto [lo, hi] = window(y);
            const double span = ticks[hi] - ticks[lo];
            if (mode == cbs::Mode::Sampling) {
              // Geometric factor per unit n (or t).
              const double fitted = std::pow(y[hi] / y[lo], 1.0 / span);
              const double table =
                  is_mean ? envelope.mean_factor(1.0) : envelope.cov_factor(1.0);
              return std::pair<double, double>(fitted, table);
            }
            // Algebraic decay: ratio of observed to predicted decay over the
            // window; 1 means the table rate is matched.
            const double predicted =
                is_mean ? envelope.mean_factor(ticks[hi]) / envelope.mean_factor(ticks[lo])
                        : envelope.cov_factor(ticks[hi]) / envelope.cov_factor(ticks[lo]);
            return std::pair<double, double>((y[hi] / y[lo]) / predicted, 1.0);
          };
          const auto [mean_fit, mean_table] = fit_one(mean_dev, true);
          const auto [cov_fit, cov_table] = fit_one(cov_dev, false);
          entry["mean_fit"] = mean_fit;
          entry["mean_table"] = mean_table;
          entry["cov_fit"] = cov_fit;
          entry["cov_table"] = cov_table;
          rates.push_back(entry);
          ++case_index;
        }
      }
    }
  }
  open_output(out_dir / "rates.json") << rates.dump(2) << '\n';
  std::cout << "theory: " << case_index << " cases\n";
  return 0;
}

int cmd_bench(const cbs::ExperimentConfig& config) {
  std::vector<double> b_values = config.b_list;
  std::vector<double> alpha_values = config.alpha_list;
  std::vector<int> J_values = config.J_list;
  if (b_values.empty()) b_values = {config.b};
  if (alpha_values.empty()) alpha_values = {config.alpha};
  if (J_values.empty()) J_values = {config.particles};
  if (config.runs < 1) throw cbs::ConfigInvalidError("runs must be positive");

  const fs::path out_dir(config.out);
  std::ofstream results = open_output(out_dir / "bench_results.csv");
  write_csv_row(results, {"objective", "b", "alpha", "J", "runs", "success_rate",
                          "mean_iterations", "mean_final_error"});

  struct Cell {
    double b, alpha;
    int J;
    cbs::SuccessRateReport report;
  };
  std::vector<Cell> cells;
  for (double b : b_values) {
    for (double alpha : alpha_values) {
      for (int J : J_values) {
        cbs::ExperimentConfig cell_config = config;
        cell_config.b = b;
        cell_config.alpha = alpha;
        cell_config.particles = J;
        const cbs::Objective objective =
            cbs::make_objective(config.objective, config.d, b);
        cbs::CbsConfig engine = to_engine_config(cell_config);
        engine.record_trajectory = false;
        const cbs::SuccessRateReport report = cbs::success_rate_experiment(
            objective, engine, config.runs, J, config.init_std, config.seed,
            config.threads);
        cells.push_back({b, alpha, J, report});
        write_csv_row(results,
                      {config.objective, g17(b), g17(alpha), std::to_string(J),
                       std::to_string(report.runs), g17(report.success_rate),
                       g17(report.mean_iterations), g17(report.mean_final_error)});
        results.flush();  // partial results survive an interrupted matrix
      }
    }
  }

  // Wide table in the usual benchmark layout: one row per (b, alpha), one
  // column per J, each cell rate|iters|error.
  std::ofstream table = open_output(out_dir / "bench_table.csv");
  std::vector<std::string> header{"b", "alpha"};
  for (int J : J_values) header.push_back("J=" + std::to_string(J));
  write_csv_row(table, header);
  for (double b : b_values) {
    for (double alpha : alpha_values) {
      std::vector<std::string> row{g17(b), g17(alpha)};
      for (int J : J_values) {
        for (const Cell& cell : cells) {
          if (cell.b == b && cell.alpha == alpha && cell.J == J) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%.0f%%|%.0f|%.3g",
                          100.0 * cell.report.success_rate,
                          cell.report.mean_iterations,
                          cell.report.mean_final_error);
            row.push_back(buf);
            break;
          }
        }
      }
      write_csv_row(table, row);
    }
  }
  std::cout << "bench: " << cells.size() << " cells x " << config.runs
            << " runs\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  cbs::ExperimentConfig config;
  bool config_file_sets_mode = false;

  // Load --config first so that explicit flags override file values.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        config = cbs::load_config_file(argv[i + 1]);
        std::ifstream in(argv[i + 1]);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        config_file_sets_mode = json::parse(text).contains("mode");
      } catch (const cbs::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
      }
    }
  }

  CLI::App app{"Consensus-based sampling: derivative-free Bayesian sampling "
               "and global optimization with interacting particles"};
  app.require_subcommand(1);
  std::string config_path;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags override)");
    cmd->add_option("--objective", config.objective,
                    "quadratic | ackley | rastrigin | elliptic-2d | logcosh");
    cmd->add_option("--d", config.d, "parameter dimension");
    cmd->add_option("--b", config.b, "translation of the benchmark minimizer");
    cmd->add_option("--J", config.particles, "ensemble size");
    cmd->add_option("--alpha", config.alpha, "damping in [0, 1)");
    cmd->add_option("--beta", config.beta, "inverse temperature");
    cmd->add_flag("--adaptive-beta", config.adaptive_beta,
                  "solve beta from the effective sample size each iteration");
    cmd->add_option("--eta", config.eta, "ESS fraction for adaptive beta");
    cmd->add_option("--beta-max", config.beta_max, "cap for adaptive beta");
    cmd->add_option("--iters", config.iters, "maximum iterations");
    cmd->add_option("--tol", config.tol, "covariance Frobenius stopping tolerance");
    cmd->add_option("--init-std", config.init_std,
                    "initial ensemble standard deviation");
    cmd->add_option("--seed", config.seed, "master seed (CBS_SEED overrides)");
    cmd->add_option("--threads", config.threads, "worker threads (0 = auto)");
    cmd->add_option("--mode", config.mode, "sampling | optimization");
    cmd->add_option("--out", config.out, "output directory")
        ->capture_default_str();
  };

  CLI::App* optimize = app.add_subcommand("optimize", "run CBS in optimization mode");
  add_common(optimize);
  optimize->callback([&] { config.command = "optimize"; });

  CLI::App* sample = app.add_subcommand("sample", "run CBS in sampling mode");
  add_common(sample);
  sample->callback([&] { config.command = "sample"; });

  CLI::App* theory = app.add_subcommand(
      "theory", "exact Gaussian moment dynamics over a parameter grid");
  add_common(theory);
  theory->add_option("--alphas", config.alpha_list,
                     "alpha grid (1 selects the continuous-time flow)");
  theory->add_option("--betas", config.beta_list, "beta grid");
  theory->add_option("--ds", config.d_list, "dimension grid");
  theory->add_option("--steps", config.steps, "discrete steps per case");
  theory->add_option("--t-end", config.t_end, "continuous-time horizon");
  theory->add_option("--dt", config.dt, "integrator step");
  theory->callback([&] { config.command = "theory"; });

  CLI::App* bench = app.add_subcommand("bench", "success-rate matrix");
  add_common(bench);
  bench->add_option("--runs", config.runs, "independent runs per cell");
  bench->add_option("--Js", config.J_list, "ensemble-size grid");
  bench->add_option("--alphas", config.alpha_list, "alpha grid");
  bench->add_option("--bs", config.b_list, "translation grid");
  bench->callback([&] { config.command = "bench"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  // The mode defaults to the one implied by the subcommand; an explicit
  // conflicting choice (flag or config file) is rejected inside the command.
  const bool mode_explicit =
      optimize->count("--mode") > 0 || sample->count("--mode") > 0 ||
      theory->count("--mode") > 0 || bench->count("--mode") > 0 ||
      config_file_sets_mode;
  if (!mode_explicit && config.command == "sample") config.mode = "sampling";

  if (const char* env_seed = std::getenv("CBS_SEED")) {
    try {
      config.seed = std::stoull(env_seed);
    } catch (const std::exception&) {
      std::cerr << "error: CBS_SEED is not a valid unsigned integer\n";
      return 1;
    }
  }

  try {
    if (config.command == "optimize") return cmd_optimize(config);
    if (config.command == "sample") return cmd_sample(config);
    if (config.command == "theory") return cmd_theory(config);
    if (config.command == "bench") return cmd_bench(config);
    throw cbs::ConfigInvalidError("unknown command: " + config.command);
  } catch (const cbs::ConfigInvalidError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

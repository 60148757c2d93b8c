#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbs/errors.hpp"

// On-disk experiment configuration. The JSON form round-trips losslessly;
// command-line flags override file values.

namespace cbs {

struct ExperimentConfig {
  std::string command = "optimize";  // optimize | sample | theory | bench
  std::string objective = "ackley";
  int d = 2;
  double b = 0.0;
  int particles = 100;  // J
  double alpha = 0.0;
  double beta = 1.0;
  bool adaptive_beta = false;
  double eta = 0.5;
  double beta_max = 1e15;
  std::string mode = "optimization";  // optimization | sampling
  int iters = 10000;
  double tol = 1e-12;
  double init_std = 1.7320508075688772;  // sqrt(3)
  std::uint64_t seed = 0;
  int runs = 100;
  std::vector<int> J_list;
  std::vector<double> alpha_list;
  std::vector<double> b_list;
  std::vector<double> beta_list;
  std::vector<int> d_list;
  double t_end = 10.0;
  double dt = 1e-3;
  int steps = 100;
  int threads = 0;  // 0 = hardware default
  std::string out = "./results";

  bool operator==(const ExperimentConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ExperimentConfig, command, objective, d, b, particles, alpha, beta,
    adaptive_beta, eta, beta_max, mode, iters, tol, init_std, seed, runs,
    J_list, alpha_list, b_list, beta_list, d_list, t_end, dt, steps, threads,
    out)

inline std::string serialize_config(const ExperimentConfig& config) {
  return nlohmann::json(config).dump(2);
}

inline ExperimentConfig parse_config(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalidError(std::string("bad config: ") + e.what());
  }
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalidError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

// 17 significant digits: enough to reproduce any double exactly.
inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace cbs

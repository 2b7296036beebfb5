// Experiment configuration: dotted key = value files with CLI
// overrides (flags win), and a stable config hash carried by metrics
// and checkpoints.
#pragma once

#include <fstream>
#include <map>
#include <sstream>

#include "gprnn/train.hpp"

namespace gprnn {

struct ExperimentConfig {
  // model axes (comma lists sweep)
  std::vector<std::string> dynamics = {"rnn"};      // rnn|ar1
  std::vector<std::string> mapping = {"gp"};        // gp|nn
  std::string observation = "gaussian";             // gaussian|poisson
  std::vector<std::string> families = {"bi-lstm"};
  // sizes
  int latent_dim = 3;
  int hidden = 30;
  // split: train on the first train_T points, test on the next test_T
  int train_T = 0;  // 0 = timesteps - test_T
  int test_T = 50;
  int train_trials = 0;  // 0 = all trials (multi-trial Poisson)
  // optimizer
  double lr = 1e-2;
  double clip_norm = 5.0;
  long max_iters = 20000;
  double tol = 1e-6;
  int patience = 50;
  int mc_samples = 1;
  // poisson schedule
  int block_steps = 25;
  int hyper_every = 4;
  long max_blocks = 2000;
  // misc
  double l2_coeff = 1e-4;
  std::vector<std::uint64_t> seeds = {1};
  std::string data_dir;
  std::string out_dir = "results";

  ModelConfig model_for(const std::string& dyn,
                        const std::string& map_kind, int n_neurons) const {
    ModelConfig m;
    m.dynamics = dyn == "ar1" ? DynamicsKind::Ar1 : DynamicsKind::Rnn;
    m.mapping = map_kind == "nn" ? MappingKind::Nn : MappingKind::Gp;
    m.observation =
        observation == "poisson" ? ObsKind::Counts : ObsKind::Real;
    m.latent_dim = latent_dim;
    m.hidden = hidden;
    m.obs_dim = n_neurons;
    m.l2_coeff = l2_coeff;
    return m;
  }

  TrainConfig train_for(std::uint64_t seed) const {
    TrainConfig tc;
    tc.max_iters = max_iters;
    tc.tol = tol;
    tc.patience = patience;
    tc.adam.lr = lr;
    tc.clip_norm = clip_norm;
    tc.seed = seed;
    tc.mc_samples = mc_samples;
    tc.block_steps = block_steps;
    tc.hyper_every = hyper_every;
    tc.max_blocks = max_blocks;
    return tc;
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    // trim
    std::size_t a = item.find_first_not_of(" \t");
    std::size_t b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

inline void apply_kv(ExperimentConfig& c, const std::string& key,
                     const std::string& val) {
  if (key == "model.dynamics") c.dynamics = split_list(val);
  else if (key == "model.mapping") c.mapping = split_list(val);
  else if (key == "model.observation") c.observation = val;
  else if (key == "model.family") c.families = split_list(val);
  else if (key == "sizes.L") c.latent_dim = std::stoi(val);
  else if (key == "sizes.H") c.hidden = std::stoi(val);
  else if (key == "split.train_T") c.train_T = std::stoi(val);
  else if (key == "split.test_T") c.test_T = std::stoi(val);
  else if (key == "split.train_trials") c.train_trials = std::stoi(val);
  else if (key == "optim.lr") c.lr = std::stod(val);
  else if (key == "optim.clip_norm") c.clip_norm = std::stod(val);
  else if (key == "optim.max_iters") c.max_iters = std::stol(val);
  else if (key == "optim.tol") c.tol = std::stod(val);
  else if (key == "optim.patience") c.patience = std::stoi(val);
  else if (key == "optim.mc_samples") c.mc_samples = std::stoi(val);
  else if (key == "optim.l2") c.l2_coeff = std::stod(val);
  else if (key == "poisson.block_steps") c.block_steps = std::stoi(val);
  else if (key == "poisson.hyper_every") c.hyper_every = std::stoi(val);
  else if (key == "poisson.max_blocks") c.max_blocks = std::stol(val);
  else if (key == "run.seeds") {
    c.seeds.clear();
    for (const auto& s : split_list(val)) c.seeds.push_back(std::stoull(s));
  } else if (key == "run.data") c.data_dir = val;
  else if (key == "run.out") c.out_dir = val;
  else throw Error("config: unknown key '" + key + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config_text(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t\r");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string()
                                    : s.substr(a, b - a + 1);
    };
    detail::apply_kv(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>&
                                        overrides = {}) {
  ExperimentConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config " + path);
    c = parse_config_text(in);
  }
  for (const auto& ov : overrides) {
    std::size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw Error("override must be key=value: '" + ov + "'");
    detail::apply_kv(c, ov.substr(0, eq), ov.substr(eq + 1));
  }
  return c;
}

// FNV-1a over a canonical rendering of the fields that define a cell.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string cell_description(const ExperimentConfig& c,
                                    const std::string& dyn,
                                    const std::string& map_kind,
                                    const std::string& family) {
  std::ostringstream ss;
  ss << "dyn=" << dyn << ";map=" << map_kind << ";obs=" << c.observation
     << ";family=" << family << ";L=" << c.latent_dim << ";H=" << c.hidden
     << ";train_T=" << c.train_T << ";test_T=" << c.test_T
     << ";lr=" << c.lr << ";max_iters=" << c.max_iters
     << ";blocks=" << c.max_blocks << ";block_steps=" << c.block_steps;
  return ss.str();
}

inline std::string config_hash(const ExperimentConfig& c,
                               const std::string& dyn,
                               const std::string& map_kind,
                               const std::string& family) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                    fnv1a(cell_description(c, dyn, map_kind, family))));
  return buf;
}

}  // namespace gprnn

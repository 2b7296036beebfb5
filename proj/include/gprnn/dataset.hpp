// Dataset directory I/O: a JSON manifest plus one header-free CSV per
// trial (T rows x N columns) and optional true-latent CSVs.
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gprnn/observation.hpp"

namespace gprnn {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Dataset {
  ObsKind kind = ObsKind::Real;
  int neurons = 0;
  int timesteps = 0;
  int latent_dim_true = 0;  // 0 when truth is absent
  std::uint64_t seed = 0;
  std::string mapping;  // provenance only
  std::vector<ObservationMatrix> trials;
  std::vector<LatentTrajectory> latents;  // empty or one per trial
};

inline void write_csv(const fs::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  // T rows x N columns: columns of the internal N x T matrix become rows
  for (int t = 0; t < m.cols(); ++t) {
    for (int i = 0; i < m.rows(); ++i) {
      if (i) out << ',';
      out << m(i, t);
    }
    out << '\n';
  }
}

inline Matrix read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error("ragged CSV " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("empty CSV " + path.string());
  Matrix m(rows.front().size(), rows.size());  // back to N x T
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < rows[t].size(); ++i)
      m(i, t) = rows[t][i];
  return m;
}

inline std::string trial_file(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial_%03d.csv", k);
  return buf;
}
inline std::string latent_file(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "latents_%03d.csv", k);
  return buf;
}

inline void save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  json man;
  man["kind"] = ds.kind == ObsKind::Real ? "gaussian" : "poisson";
  man["neurons"] = ds.neurons;
  man["timesteps"] = ds.timesteps;
  man["trials"] = ds.trials.size();
  man["latent_dim_true"] = ds.latent_dim_true;
  man["seed"] = ds.seed;
  man["mapping"] = ds.mapping;
  man["has_latents"] = !ds.latents.empty();
  std::ofstream(dir / "manifest.json") << man.dump(2) << '\n';
  for (std::size_t k = 0; k < ds.trials.size(); ++k)
    write_csv(dir / trial_file(static_cast<int>(k)), ds.trials[k].values);
  for (std::size_t k = 0; k < ds.latents.size(); ++k)
    write_csv(dir / latent_file(static_cast<int>(k)), ds.latents[k]);
}

// Eagerly validated load; every manifest/file inconsistency is an
// error naming the offending trial.
inline Dataset load_dataset(const fs::path& dir) {
  std::ifstream manf(dir / "manifest.json");
  if (!manf) throw Error("missing manifest " + (dir / "manifest.json").string());
  json man = json::parse(manf);
  Dataset ds;
  std::string kind = man.at("kind");
  if (kind == "gaussian") ds.kind = ObsKind::Real;
  else if (kind == "poisson") ds.kind = ObsKind::Counts;
  else throw Error("manifest: unknown kind '" + kind + "'");
  ds.neurons = man.at("neurons");
  ds.timesteps = man.at("timesteps");
  ds.latent_dim_true = man.value("latent_dim_true", 0);
  ds.seed = man.value("seed", 0ULL);
  ds.mapping = man.value("mapping", "");
  int trials = man.at("trials");
  if (ds.neurons < 1 || ds.timesteps < 1 || trials < 1)
    throw Error("manifest: sizes must be >= 1");
  bool has_latents = man.value("has_latents", false);
  for (int k = 0; k < trials; ++k) {
    ObservationMatrix x;
    x.kind = ds.kind;
    x.values = read_csv(dir / trial_file(k));
    if (x.neurons() != ds.neurons || x.timesteps() != ds.timesteps)
      throw Error("trial " + std::to_string(k) + ": shape mismatch, got " +
                  std::to_string(x.neurons()) + "x" +
                  std::to_string(x.timesteps()) + ", manifest says " +
                  std::to_string(ds.neurons) + "x" +
                  std::to_string(ds.timesteps));
    try {
      x.validate();
    } catch (const Error& e) {
      throw Error("trial " + std::to_string(k) + ": " + e.what());
    }
    ds.trials.push_back(std::move(x));
    if (has_latents) {
      Matrix z = read_csv(dir / latent_file(k));
      if (z.cols() != ds.timesteps)
        throw Error("latents " + std::to_string(k) + ": T mismatch");
      if (ds.latent_dim_true && z.rows() != ds.latent_dim_true)
        throw Error("latents " + std::to_string(k) + ": L mismatch");
      ds.latents.push_back(std::move(z));
    }
  }
  return ds;
}

}  // namespace gprnn

// Checkpoint persistence: named-segment parameter vectors with a config
// hash, and optionally the optimizer state needed to resume training.
#pragma once

#include <fstream>

#include <json.hpp>

#include "gprnn/optim.hpp"

namespace gprnn {

struct Checkpoint {
  ParamVector params;
  std::string config_hash;
  bool has_adam = false;
  AdamState adam;
  long next_iter = 0;
};

namespace detail {

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const nlohmann::json& a) {
  Vector v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::json j;
  j["config_hash"] = ck.config_hash;
  nlohmann::json segs = nlohmann::json::array();
  for (const Segment& s : ck.params.segments())
    segs.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  j["segments"] = segs;
  j["values"] = detail::vector_to_json(ck.params.values);
  if (ck.has_adam) {
    j["adam"] = {{"m", detail::vector_to_json(ck.adam.m)},
                 {"v", detail::vector_to_json(ck.adam.v)},
                 {"step", ck.adam.step},
                 {"lr", ck.adam.hyper.lr},
                 {"beta1", ck.adam.hyper.beta1},
                 {"beta2", ck.adam.hyper.beta2},
                 {"eps", ck.adam.hyper.eps}};
    j["next_iter"] = ck.next_iter;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << j.dump() << '\n';
}

// `expected_hash`, when non-empty, must match or the load is refused.
inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::string& expected_hash = "") {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw Error("checkpoint parse error in " + path + ": " + e.what());
  }
  Checkpoint ck;
  ck.config_hash = j.at("config_hash");
  if (!expected_hash.empty() && ck.config_hash != expected_hash)
    throw Error("checkpoint config hash mismatch: file has " +
                ck.config_hash + ", expected " + expected_hash);
  for (const auto& s : j.at("segments"))
    ck.params.add(s.at("name"), s.at("rows"), s.at("cols"));
  Vector vals = detail::vector_from_json(j.at("values"));
  if (vals.size() != ck.params.size())
    throw Error("checkpoint value count mismatch in " + path);
  ck.params.values = vals;
  if (j.contains("adam")) {
    ck.has_adam = true;
    const auto& a = j["adam"];
    ck.adam.m = detail::vector_from_json(a.at("m"));
    ck.adam.v = detail::vector_from_json(a.at("v"));
    ck.adam.step = a.at("step");
    ck.adam.hyper = {a.at("lr"), a.at("beta1"), a.at("beta2"), a.at("eps")};
    ck.next_iter = j.value("next_iter", 0L);
  }
  return ck;
}

}  // namespace gprnn

#pragma once

#include <chrono>
#include <ctime>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gcr/error.hpp"
#include "gcr/inference.hpp"
#include "gcr/version.hpp"

namespace gcr {

using json = nlohmann::json;

// 64-bit FNV-1a over raw file bytes; recorded in the manifest so reruns can
// be matched to their exact inputs.
inline std::string content_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open '" + path + "' for hashing");
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << h;
  return os.str();
}

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

inline json make_manifest(const std::string& command,
                          const std::map<std::string, std::string>& args,
                          std::uint64_t seed, const std::string& input_path) {
  json m;
  m["command"] = command;
  m["args"] = args;
  m["seed"] = seed;
  m["version"] = kVersion;
  m["created_at"] = timestamp_utc();
  m["input_digest"] = input_path.empty() ? "" : content_digest(input_path);
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

inline json wald_to_json(const std::vector<WaldRow>& rows) {
  json t;
  t["names"] = json::array();
  t["estimate"] = json::array();
  t["std_error"] = json::array();
  t["z"] = json::array();
  t["p_value"] = json::array();
  t["stars"] = json::array();
  for (const auto& r : rows) {
    t["names"].push_back(r.name);
    t["estimate"].push_back(r.estimate);
    t["std_error"].push_back(r.std_error);
    t["z"].push_back(r.z);
    t["p_value"].push_back(r.p_value);
    t["stars"].push_back(r.stars);
  }
  return t;
}

// Everything diagnose needs to reuse a fit without re-estimating.
struct FitArtifact {
  std::string family;
  std::string mean_formula;
  std::string corr_formula;
  std::string cluster_col;
  std::string response_col;
  std::string order_col;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  double phi = 1.0;
  bool converged = false;
  bool alpha_frozen = false;
};

inline FitArtifact fit_artifact_from_json(const json& j) {
  if (!j.contains("schema_version"))
    fail_data("fit artifact is missing schema_version");
  FitArtifact a;
  a.family = j.at("family").get<std::string>();
  a.mean_formula = j.at("mean_formula").get<std::string>();
  a.corr_formula = j.at("corr_formula").get<std::string>();
  a.cluster_col = j.at("cluster_col").get<std::string>();
  a.response_col = j.at("response_col").get<std::string>();
  a.order_col = j.value("order_col", "");
  a.beta = vector_from_json(j.at("beta").at("estimate"));
  a.alpha = vector_from_json(j.at("alpha").at("estimate"));
  a.phi = j.at("phi").get<double>();
  a.converged = j.at("converged").get<bool>();
  a.alpha_frozen = j.value("alpha_frozen", false);
  return a;
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail_data("cannot parse JSON from '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace gcr

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pmala/diagnostics.hpp"
#include "pmala/mcmc.hpp"
#include "pmala/model.hpp"

namespace pmala {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << std::setprecision(17);
  return os;
}

/// Observation CSV with header "t,z" and t = 1..T.
inline void write_observations_csv(std::ostream& os, const ObservationSeries& z) {
  os << "t,z\n" << std::setprecision(17);
  for (std::size_t t = 0; t < z.size(); ++t) os << (t + 1) << ',' << z[t] << '\n';
}

inline ObservationSeries read_observations_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("observation CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,z") throw IoError("observation CSV must start with header \"t,z\", got \"" + line + "\"");
  std::vector<double> z;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("observation CSV row " + std::to_string(row) + " has no comma");
    try {
      std::size_t used = 0;
      const std::string field = line.substr(comma + 1);
      const double v = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument("trailing characters");
      z.push_back(v);
    } catch (const std::exception&) {
      throw IoError("observation CSV row " + std::to_string(row) + ": cannot parse z");
    }
  }
  return ObservationSeries(std::move(z));
}

inline ObservationSeries read_observations_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_observations_csv(is);
}

/// "iter,accept,logpost,x1..xn", iter starting at 1.
inline void write_trace_csv(std::ostream& os, const ChainTrace& trace) {
  const auto n = trace.states.cols();
  os << "iter,accept,logpost";
  for (Eigen::Index j = 0; j < n; ++j) os << ",x" << (j + 1);
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << (i + 1) << ',' << (trace.accepted[i] ? 1 : 0) << ',' << trace.log_post[i];
    for (Eigen::Index j = 0; j < n; ++j) os << ',' << trace.states(static_cast<Eigen::Index>(i), j);
    os << '\n';
  }
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw IoError("matrix JSON must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw IoError("matrix JSON rows differ in length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!r[static_cast<std::size_t>(c)].is_number()) throw IoError("matrix JSON entries must be numbers");
      m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(x);
  return a;
}

/// Acceptance rate, ESJD and per-parameter ESS of the post-burn-in part.
inline nlohmann::json trace_summary_json(const ChainTrace& trace) {
  const auto kept = trace.kept_states();
  nlohmann::json j;
  j["iterations"] = trace.size();
  j["burn_in"] = trace.burn_in;
  j["acceptance_rate"] = trace.kept_acceptance_rate();
  j["esjd"] = kept.rows() >= 2 ? esjd(kept) : 0.0;
  if (kept.rows() >= 10) {
    auto e = ess_columns(kept);
    auto arr = nlohmann::json::array();
    for (const auto& r : e) arr.push_back({{"ess", r.ess}, {"capped", r.capped}, {"degenerate", r.degenerate}});
    j["ess"] = arr;
    j["min_ess"] = min_ess(e);
  }
  j["wall_seconds"] = trace.wall_seconds;
  return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = open_output(path);
  os << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace pmala

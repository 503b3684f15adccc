#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "binn/dynamics.hpp"
#include "binn/numerics.hpp"

namespace binn {

/// Thrown for unreadable/unwritable paths so the CLI can map them to a
/// dedicated exit code.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 17 significant digits: the shortest rendering guaranteed to round-trip
/// any IEEE-754 double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Writes `t,x0,...,x{d-1}` rows; values round-trip bit-exactly.
inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "t";
  for (Eigen::Index i = 0; i < traj.dim(); ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << format_double(traj.time_at(k));
    const Vector& s = traj.states[k];
    for (Eigen::Index i = 0; i < s.size(); ++i) out << "," << format_double(s[i]);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trajectory file: " + path);

  auto split = [](const std::string& s) {
    std::vector<std::string> fields;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) fields.push_back(item);
    return fields;
  };

  const std::size_t n_cols = split(line).size();
  if (n_cols < 2) throw IoError("trajectory header needs t plus at least one state column: " + path);
  const Eigen::Index d = static_cast<Eigen::Index>(n_cols - 1);

  Trajectory traj;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != n_cols) {
      throw IoError("trajectory row has " + std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(n_cols) + ": " + path);
    }
    times.push_back(std::stod(fields[0]));
    Vector s(d);
    for (Eigen::Index i = 0; i < d; ++i) s[i] = std::stod(fields[static_cast<std::size_t>(i) + 1]);
    traj.states.push_back(std::move(s));
  }
  if (traj.states.empty()) throw IoError("trajectory has no states: " + path);
  traj.t0 = times.front();
  traj.h = times.size() > 1 ? times[1] - times[0] : 0.0;
  return traj;
}

}  // namespace binn

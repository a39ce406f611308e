#pragma once

// File formats:
//   *.f64       raw little-endian float64, row-major (iy * nx + ix)
//   *.json      snapshot sidecar (grid, time, step, epsilon, model, scheme)
//   contour CSV "polyline_id,x,y" rows in traversal order
//   series CSV  header and row formatting live in diagnostics.hpp

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfkit/diagnostics.hpp"
#include "pfkit/errors.hpp"
#include "pfkit/geometry.hpp"
#include "pfkit/grid.hpp"
#include "pfkit/integrators.hpp"
#include "pfkit/model.hpp"

namespace pfkit {

struct SnapshotMeta {
  GridSpec grid;
  double time = 0.0;
  long long step = 0;
  double epsilon = 0.0;
  std::string model;
  std::string scheme;
};

namespace detail {

static_assert(sizeof(double) == 8, "snapshot format requires 64-bit doubles");

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char byte0;
  std::memcpy(&byte0, &probe, 1);
  return byte0 == 1;
}

inline void byteswap_doubles(std::vector<double>& v) {
  for (double& d : v) {
    unsigned char b[8];
    std::memcpy(b, &d, 8);
    std::swap(b[0], b[7]);
    std::swap(b[1], b[6]);
    std::swap(b[2], b[5]);
    std::swap(b[3], b[4]);
    std::memcpy(&d, b, 8);
  }
}

}  // namespace detail

inline void write_field_f64(const std::filesystem::path& path,
                            const ScalarField& u) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileNotFound("cannot open for writing: " + path.string());
  if (detail::host_is_little_endian()) {
    out.write(reinterpret_cast<const char*>(u.a.data()),
              static_cast<std::streamsize>(u.a.size() * sizeof(double)));
  } else {
    std::vector<double> copy = u.a;
    detail::byteswap_doubles(copy);
    out.write(reinterpret_cast<const char*>(copy.data()),
              static_cast<std::streamsize>(copy.size() * sizeof(double)));
  }
  if (!out) throw Error("short write: " + path.string());
}

inline ScalarField read_field_f64(const std::filesystem::path& path,
                                  const GridSpec& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound(path.string());
  ScalarField u;
  u.grid = g;
  u.a.resize(g.size());
  in.read(reinterpret_cast<char*>(u.a.data()),
          static_cast<std::streamsize>(u.a.size() * sizeof(double)));
  if (in.gcount() !=
      static_cast<std::streamsize>(u.a.size() * sizeof(double)))
    throw ParseError("field file shorter than nx*ny doubles: " + path.string(),
                     0);
  if (!detail::host_is_little_endian()) detail::byteswap_doubles(u.a);
  return u;
}

inline void write_snapshot_meta(const std::filesystem::path& path,
                                const SnapshotMeta& m) {
  nlohmann::json j;
  j["nx"] = m.grid.nx;
  j["ny"] = m.grid.ny;
  j["Lx"] = m.grid.Lx;
  j["Ly"] = m.grid.Ly;
  j["time"] = m.time;
  j["step"] = m.step;
  j["epsilon"] = m.epsilon;
  j["model"] = m.model;
  j["scheme"] = m.scheme;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileNotFound("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

inline SnapshotMeta read_snapshot_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("sidecar JSON: ") + e.what(), 0);
  }
  SnapshotMeta m;
  m.grid.nx = j.at("nx").get<int>();
  m.grid.ny = j.at("ny").get<int>();
  m.grid.Lx = j.at("Lx").get<double>();
  m.grid.Ly = j.at("Ly").get<double>();
  m.time = j.at("time").get<double>();
  m.step = j.at("step").get<long long>();
  m.epsilon = j.at("epsilon").get<double>();
  m.model = j.at("model").get<std::string>();
  m.scheme = j.at("scheme").get<std::string>();
  m.grid.validate();
  return m;
}

// Writes step_<n>.f64 plus the matching step_<n>.json sidecar into `dir`;
// returns the field path.
inline std::filesystem::path write_snapshot(const std::filesystem::path& dir,
                                            const SimState& s,
                                            const ModelSpec& model,
                                            const SchemeSpec& scheme) {
  std::filesystem::create_directories(dir);
  const std::string stem = "step_" + std::to_string(s.n);
  const std::filesystem::path field_path = dir / (stem + ".f64");
  write_field_f64(field_path, s.u);
  SnapshotMeta m;
  m.grid = s.u.grid;
  m.time = s.t;
  m.step = s.n;
  m.epsilon = model.epsilon;
  m.model = to_string(model.kind);
  m.scheme = to_string(scheme.kind);
  write_snapshot_meta(dir / (stem + ".json"), m);
  return field_path;
}

inline void write_contour_csv(const std::filesystem::path& path,
                              const Contour& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileNotFound("cannot open for writing: " + path.string());
  out << "polyline_id,x,y\n";
  for (std::size_t pid = 0; pid < c.polylines.size(); ++pid)
    for (const auto& p : c.polylines[pid].pts)
      out << pid << ',' << detail::format_double(p[0]) << ','
          << detail::format_double(p[1]) << '\n';
}

inline void write_series_csv(const std::filesystem::path& path,
                             const std::vector<SeriesRecord>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileNotFound("cannot open for writing: " + path.string());
  out << series_csv_header << '\n';
  for (const SeriesRecord& r : rows) out << series_csv_row(r) << '\n';
}

}  // namespace pfkit

#pragma once

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "admmsdp/admm.hpp"

namespace admmsdp {

using json = nlohmann::json;

inline constexpr const char* kTraceHeader =
    "k,r_p,r_d,r_gap,r_max,rank_X,rank_S,lam_min_absZ,norm_Z_diff";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& out,
                            const std::vector<IterationRecord>& records) {
  out << kTraceHeader << "\n";
  for (const auto& r : records) {
    out << r.k << ',' << format_double(r.r_p) << ',' << format_double(r.r_d) << ','
        << format_double(r.r_gap) << ',' << format_double(r.r_max) << ',' << r.rank_X
        << ',' << r.rank_S << ',' << format_double(r.lam_min_absZ) << ','
        << format_double(r.norm_Z_diff) << "\n";
  }
}

/// Parses the CSV produced by write_trace_csv; '#' lines are skipped.
inline std::vector<IterationRecord> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw FormatError("trace csv: unexpected header");
  }
  std::vector<IterationRecord> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    IterationRecord r;
    char c1, c2, c3, c4, c5, c6, c7, c8;
    is >> r.k >> c1 >> r.r_p >> c2 >> r.r_d >> c3 >> r.r_gap >> c4 >> r.r_max >> c5 >>
        r.rank_X >> c6 >> r.rank_S >> c7 >> r.lam_min_absZ >> c8 >> r.norm_Z_diff;
    if (!is) throw FormatError("trace csv: malformed row '" + line + "'");
    out.push_back(r);
  }
  return out;
}

inline json to_json(const IterationRecord& r) {
  json j = {{"k", r.k},
            {"r_p", r.r_p},
            {"r_d", r.r_d},
            {"r_gap", r.r_gap},
            {"r_max", r.r_max},
            {"rank_X", r.rank_X},
            {"rank_S", r.rank_S},
            {"lam_min_absZ", r.lam_min_absZ},
            {"norm_Z_diff", r.norm_Z_diff}};
  if (r.norm_H) j["norm_H"] = *r.norm_H;
  if (r.norm_HO) j["norm_HO"] = *r.norm_HO;
  if (r.face_X) j["face_X"] = *r.face_X;
  if (r.face_S) j["face_S"] = *r.face_S;
  return j;
}

struct TraceMetadata {
  std::string instance;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  std::string status;
};

inline json trace_json(const TraceMetadata& meta,
                       const std::vector<IterationRecord>& records) {
  json j;
  j["instance"] = meta.instance;
  j["sigma"] = meta.sigma;
  j["seed"] = meta.seed;
  j["status"] = meta.status;
  j["records"] = json::array();
  for (const auto& r : records) j["records"].push_back(to_json(r));
  return j;
}

inline json matrix_to_json(const Matrix& a) {
  json rows = json::array();
  for (Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("matrix json: expected an array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
  Matrix a(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<Index>(j[i].size()) != cols) {
      throw FormatError("matrix json: ragged rows");
    }
    for (Index c = 0; c < cols; ++c) a(i, c) = j[i][c].get<double>();
  }
  return a;
}

inline json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace admmsdp

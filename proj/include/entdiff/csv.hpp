#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "entdiff/errors.hpp"
#include "entdiff/samplers.hpp"
#include "entdiff/training.hpp"

namespace entdiff {

namespace detail {

// Doubles are written with 17 significant digits so a read-back reproduces
// the exact bit pattern.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_field(const std::string& s, std::size_t line) {
  if (s.empty()) throw csv_error(line, "empty numeric field");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw csv_error(line, "bad number: " + s);
  return v;
}

inline std::size_t parse_index_field(const std::string& s, std::size_t line) {
  if (s.empty()) throw csv_error(line, "empty integer field");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) throw csv_error(line, "bad integer: " + s);
  return static_cast<std::size_t>(v);
}

}  // namespace detail

// ---- samples: sample_id,label,x0,...,x{d-1} ----

inline void write_samples_csv(std::ostream& out, const std::vector<DenseVector>& points,
                              const std::vector<std::size_t>& labels) {
  if (points.size() != labels.size())
    throw std::invalid_argument("write_samples_csv: points/labels size mismatch");
  if (points.empty()) throw std::invalid_argument("write_samples_csv: empty set");
  const std::size_t d = points.front().size();
  out << "sample_id,label";
  for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    require_size(points[i], d, "write_samples_csv");
    out << i << "," << labels[i];
    for (double v : points[i]) out << "," << detail::fmt_double(v);
    out << "\n";
  }
}

struct SamplesFile {
  std::vector<DenseVector> points;
  std::vector<std::size_t> labels;
};

inline SamplesFile read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw csv_error(1, "missing header");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label")
    throw csv_error(1, "expected header sample_id,label,x0,...");
  const std::size_t d = header.size() - 2;
  for (std::size_t i = 0; i < d; ++i)
    if (header[2 + i] != "x" + std::to_string(i))
      throw csv_error(1, "bad coordinate column: " + header[2 + i]);

  SamplesFile f;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 2 + d)
      throw csv_error(lineno, "expected " + std::to_string(2 + d) + " fields, found " +
                                  std::to_string(fields.size()));
    f.labels.push_back(detail::parse_index_field(fields[1], lineno));
    DenseVector p(d);
    for (std::size_t i = 0; i < d; ++i)
      p[i] = detail::parse_double_field(fields[2 + i], lineno);
    f.points.push_back(std::move(p));
  }
  return f;
}

// ---- trajectories: sample_id,label,t,entropy,grad_norm,scale,scheme ----

inline constexpr const char* kTrajectoryHeader =
    "sample_id,label,t,entropy,grad_norm,scale,scheme";

inline void write_trajectories_csv(std::ostream& out,
                                   const std::vector<Trajectory>& trajs) {
  out << kTrajectoryHeader << "\n";
  for (const auto& traj : trajs) {
    for (const auto& r : traj.records) {
      out << traj.sample_id << "," << traj.label << "," << r.t << ","
          << detail::fmt_double(r.entropy) << "," << detail::fmt_double(r.grad_norm)
          << "," << detail::fmt_double(r.scale) << "," << r.scheme << "\n";
    }
  }
}

// Rows regroup into trajectories by sample_id; final coordinates live in the
// samples file, so they come back empty here.
inline std::vector<Trajectory> read_trajectories_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw csv_error(1, "missing header");
  {
    std::string stripped = line;
    if (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
    if (stripped != kTrajectoryHeader)
      throw csv_error(1, std::string("expected header ") + kTrajectoryHeader);
  }
  std::vector<Trajectory> trajs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 7) throw csv_error(lineno, "expected 7 fields");
    const std::size_t sample_id = detail::parse_index_field(fields[0], lineno);
    const std::size_t label = detail::parse_index_field(fields[1], lineno);
    GuidanceStepRecord rec;
    rec.t = detail::parse_index_field(fields[2], lineno);
    rec.entropy = detail::parse_double_field(fields[3], lineno);
    rec.grad_norm = detail::parse_double_field(fields[4], lineno);
    rec.scale = detail::parse_double_field(fields[5], lineno);
    rec.scheme = fields[6];
    if (trajs.empty() || trajs.back().sample_id != sample_id) {
      Trajectory t;
      t.sample_id = sample_id;
      t.label = label;
      trajs.push_back(std::move(t));
    } else if (trajs.back().label != label) {
      throw csv_error(lineno, "label changed within sample " + std::to_string(sample_id));
    }
    trajs.back().records.push_back(std::move(rec));
  }
  return trajs;
}

// ---- telemetry: step,ce,ect,total,val_accuracy,val_mean_entropy ----

inline constexpr const char* kTelemetryHeader =
    "step,ce,ect,total,val_accuracy,val_mean_entropy";

inline void write_telemetry_csv(std::ostream& out,
                                const std::vector<TelemetryRow>& rows) {
  out << kTelemetryHeader << "\n";
  for (const auto& r : rows) {
    out << r.step << "," << detail::fmt_double(r.ce) << "," << detail::fmt_double(r.ect)
        << "," << detail::fmt_double(r.total) << ","
        << detail::fmt_double(r.val_accuracy) << ","
        << detail::fmt_double(r.val_mean_entropy) << "\n";
  }
}

inline std::vector<TelemetryRow> read_telemetry_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw csv_error(1, "missing header");
  {
    std::string stripped = line;
    if (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
    if (stripped != kTelemetryHeader)
      throw csv_error(1, std::string("expected header ") + kTelemetryHeader);
  }
  std::vector<TelemetryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 6) throw csv_error(lineno, "expected 6 fields");
    TelemetryRow r;
    r.step = detail::parse_index_field(fields[0], lineno);
    r.ce = detail::parse_double_field(fields[1], lineno);
    r.ect = detail::parse_double_field(fields[2], lineno);
    r.total = detail::parse_double_field(fields[3], lineno);
    r.val_accuracy = detail::parse_double_field(fields[4], lineno);
    r.val_mean_entropy = detail::parse_double_field(fields[5], lineno);
    rows.push_back(r);
  }
  return rows;
}

// ---- file helpers ----

template <typename WriteFn>
inline void write_file(const std::string& path, WriteFn&& fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  fn(out);
  out.flush();
  if (!out) throw io_error("failed writing " + path);
}

template <typename ReadFn>
inline auto read_file(const std::string& path, ReadFn&& fn) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  return fn(in);
}

}  // namespace entdiff

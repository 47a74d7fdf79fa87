#pragma once

// Balanced multi-unit panel: one treated group and one or more controls,
// every unit observed at every period 1..T. CSV layout:
//
//   unit_id,t,treated,post,y
//
// Lines starting with '#' are metadata comments and are skipped on read.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "itsa/errors.hpp"

namespace itsa {

struct Observation {
  int unit_id = 0;
  int t = 0;
  bool treated = false;
  bool post = false;
  double y = 0.0;
};

// Contiguous run of rows belonging to one unit, in stacked row order.
struct Segment {
  long start = 0;
  long length = 0;
  int unit_id = 0;
  bool treated = false;
};

struct Panel {
  std::vector<Observation> rows;

  long n_rows() const { return static_cast<long>(rows.size()); }

  // Sorts rows by (unit_id, t) and checks structure: every unit observed at
  // exactly the periods 1..T, the same T for all units, a constant treated
  // flag within each unit, finite outcomes, and at least one treated and one
  // control unit. Throws ValidationError subtypes on violations.
  void validate() {
    if (rows.empty()) throw ValidationError("panel has no rows");
    std::sort(rows.begin(), rows.end(), [](const Observation& a, const Observation& b) {
      if (a.unit_id != b.unit_id) return a.unit_id < b.unit_id;
      return a.t < b.t;
    });
    const long n = n_rows();
    int n_treated_units = 0;
    int n_control_units = 0;
    long unit_start = 0;
    long expected_len = -1;
    for (long i = 0; i < n; ++i) {
      const Observation& o = rows[i];
      if (!std::isfinite(o.y))
        throw ValidationError("non-finite outcome for unit " + std::to_string(o.unit_id) +
                              " at t=" + std::to_string(o.t));
      const bool last_of_unit = i + 1 == n || rows[i + 1].unit_id != o.unit_id;
      const long pos_in_unit = i - unit_start;
      if (o.t != pos_in_unit + 1) {
        if (pos_in_unit > 0 && o.t == rows[i - 1].t)
          throw MissingObservation("duplicate period t=" + std::to_string(o.t) +
                                   " for unit " + std::to_string(o.unit_id));
        throw MissingObservation("unit " + std::to_string(o.unit_id) + " missing period t=" +
                                 std::to_string(pos_in_unit + 1));
      }
      if (o.treated != rows[unit_start].treated)
        throw ValidationError("treated flag not constant within unit " +
                              std::to_string(o.unit_id));
      if (last_of_unit) {
        const long len = i - unit_start + 1;
        if (expected_len < 0) {
          expected_len = len;
        } else if (len != expected_len) {
          throw MissingObservation("unit " + std::to_string(o.unit_id) + " has " +
                                   std::to_string(len) + " periods, expected " +
                                   std::to_string(expected_len));
        }
        if (o.treated)
          ++n_treated_units;
        else
          ++n_control_units;
        unit_start = i + 1;
      }
    }
    if (n_treated_units == 0) throw DegenerateDesign("panel has no treated unit");
    if (n_control_units == 0) throw DegenerateDesign("panel has no control unit");
  }

  // The helpers below assume a validated (sorted, balanced) panel.

  int n_periods() const {
    int t_max = 0;
    for (const Observation& o : rows) t_max = std::max(t_max, o.t);
    return t_max;
  }

  int n_units() const {
    const int T = n_periods();
    return T > 0 ? static_cast<int>(rows.size() / static_cast<std::size_t>(T)) : 0;
  }

  std::vector<Segment> segments() const {
    std::vector<Segment> out;
    const long n = n_rows();
    long start = 0;
    for (long i = 0; i < n; ++i) {
      if (i + 1 == n || rows[i + 1].unit_id != rows[i].unit_id) {
        out.push_back(Segment{start, i - start + 1, rows[i].unit_id, rows[i].treated});
        start = i + 1;
      }
    }
    return out;
  }
};

// Recovers the intervention time from the post flags: the earliest flagged
// period, checked for consistency (post == (t >= t0) on every row).
inline int infer_intervention(const Panel& panel) {
  int t0 = 0;
  for (const Observation& o : panel.rows)
    if (o.post && (t0 == 0 || o.t < t0)) t0 = o.t;
  if (t0 == 0) throw DegenerateDesign("panel has no post-intervention rows");
  for (const Observation& o : panel.rows)
    if (o.post != (o.t >= t0))
      throw ValidationError("post flags are not a single shared changepoint (unit " +
                            std::to_string(o.unit_id) + ", t=" + std::to_string(o.t) + ")");
  if (t0 == 1) throw DegenerateDesign("panel has no pre-intervention rows");
  return t0;
}

namespace detail {

inline constexpr const char* kPanelCsvHeader = "unit_id,t,treated,post,y";

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

template <class T>
inline T parse_number(std::string_view s, long line_no, const char* what) {
  T value{};
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " value '" +
                     std::string(s) + "'");
  return value;
}

inline bool parse_flag(std::string_view s, long line_no, const char* what) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw ParseError("line " + std::to_string(line_no) + ": " + what + " must be 0 or 1, got '" +
                   std::string(s) + "'");
}

// Shortest decimal representation that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[40];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    double parsed = 0.0;
    std::from_chars(shorter, shorter + std::char_traits<char>::length(shorter), parsed);
    if (parsed == v) return shorter;
  }
  return buf;
}

}  // namespace detail

inline Panel read_panel_csv(std::istream& in) {
  Panel panel;
  std::string line;
  long line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != detail::kPanelCsvHeader)
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" +
                         std::string(detail::kPanelCsvHeader) + "', got '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split_fields(line);
    if (fields.size() != 5)
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    Observation o;
    o.unit_id = detail::parse_number<int>(fields[0], line_no, "unit_id");
    o.t = detail::parse_number<int>(fields[1], line_no, "t");
    o.treated = detail::parse_flag(fields[2], line_no, "treated");
    o.post = detail::parse_flag(fields[3], line_no, "post");
    o.y = detail::parse_number<double>(fields[4], line_no, "y");
    panel.rows.push_back(o);
  }
  if (!header_seen) throw ParseError("input has no header row");
  if (panel.rows.empty()) throw ParseError("input has a header but no data rows");
  return panel;
}

inline Panel read_panel_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open input file '" + path + "'");
  return read_panel_csv(in);
}

// Writes the panel with optional '#' metadata comment lines before the
// header. Outcome values use the shortest exact decimal form, so a reread
// reproduces the doubles bit for bit and equal inputs give equal bytes.
inline void write_panel_csv(std::ostream& out, const Panel& panel,
                            const std::vector<std::string>& comments = {}) {
  for (const std::string& c : comments) out << "# " << c << "\n";
  out << detail::kPanelCsvHeader << "\n";
  for (const Observation& o : panel.rows) {
    out << o.unit_id << ',' << o.t << ',' << (o.treated ? 1 : 0) << ',' << (o.post ? 1 : 0)
        << ',' << detail::format_double(o.y) << "\n";
  }
}

}  // namespace itsa

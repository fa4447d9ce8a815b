#pragma once

// Recording <-> CSV. One row per sample:
//   t,subject,terrain,stride_id,phase_pct,rate_pct,L_accx,...,P_pitch
// Numbers are written in shortest round-trip form so export/import is exact.

#include "gaitphase/data/recording.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gaitphase {

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{"t", "subject", "terrain", "stride_id", "phase_pct", "rate_pct"};
    for (std::size_t i = 0; i < kImuChannels; ++i) c.push_back(channel_name(i));
    return c;
  }();
  return cols;
}

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("csv: number formatting failed");
  out.append(buf, end);
}

inline double parse_double(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw std::runtime_error("csv line " + std::to_string(line) + ": bad number '" + std::string(s) + "' in column " +
                             std::string(column));
  return v;
}

inline long long parse_int(std::string_view s, std::size_t line, std::string_view column) {
  long long v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw std::runtime_error("csv line " + std::to_string(line) + ": bad integer '" + std::string(s) + "' in column " +
                             std::string(column));
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline void write_csv(std::ostream& out, const Recording& rec) {
  validate(rec);
  std::string line;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) line += ',';
    line += cols[i];
  }
  out << line << '\n';
  const std::size_t total = rec.length();
  for (std::size_t n = 0; n < total; ++n) {
    line.clear();
    detail::append_number(line, static_cast<double>(n) / rec.sample_rate);
    line += ',';
    line += std::to_string(rec.subject_id);
    line += ',';
    line += terrain_name(rec.terrain[n]);
    line += ',';
    line += std::to_string(rec.stride_of(n));
    line += ',';
    detail::append_number(line, 100.0 * rec.phase_truth[n].phase);
    line += ',';
    detail::append_number(line, 100.0 * rec.phase_truth[n].rate);
    for (std::size_t c = 0; c < kImuChannels; ++c) {
      line += ',';
      detail::append_number(line, rec.value(c, n));
    }
    out << line << '\n';
  }
}

inline void export_csv(const std::string& path, const Recording& rec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(out, rec);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Recording read_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("csv: empty input");
  const auto names = detail::split_fields(detail::trim_cr(header));
  std::vector<std::size_t> col(csv_columns().size());
  for (std::size_t i = 0; i < csv_columns().size(); ++i) {
    const auto& want = csv_columns()[i];
    auto it = std::find(names.begin(), names.end(), want);
    if (it == names.end()) throw std::runtime_error("csv: missing column '" + want + "'");
    col[i] = static_cast<std::size_t>(it - names.begin());
  }

  Recording rec;
  std::vector<std::vector<double>> values(kImuChannels);
  std::vector<PhaseState> declared;
  std::string raw;
  std::size_t line_no = 1;
  long long prev_stride = 0;
  bool first = true;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim_cr(raw);
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != names.size())
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " + std::to_string(names.size()) +
                               " fields, got " + std::to_string(f.size()));
    const auto field = [&](std::size_t i) { return f[col[i]]; };

    const auto subject = detail::parse_int(field(1), line_no, "subject");
    const auto terrain = parse_terrain(field(2));
    if (!terrain)
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": unknown terrain '" + std::string(field(2)) +
                               "'");
    const auto stride = detail::parse_int(field(3), line_no, "stride_id");
    if (first) {
      rec.subject_id = static_cast<int>(subject);
      rec.stride_starts.push_back(0);
    } else {
      if (subject != rec.subject_id)
        throw std::runtime_error("csv line " + std::to_string(line_no) + ": subject changes within a recording");
      if (stride < prev_stride)
        throw std::runtime_error("csv line " + std::to_string(line_no) + ": stride_id is not monotone");
      if (stride > prev_stride) rec.stride_starts.push_back(rec.terrain.size());
    }
    prev_stride = stride;
    first = false;

    rec.terrain.push_back(*terrain);
    declared.push_back({detail::parse_double(field(4), line_no, "phase_pct") / 100.0,
                        detail::parse_double(field(5), line_no, "rate_pct") / 100.0});
    for (std::size_t c = 0; c < kImuChannels; ++c)
      values[c].push_back(detail::parse_double(field(6 + c), line_no, csv_columns()[6 + c]));
  }
  if (rec.terrain.empty()) throw std::runtime_error("csv: no data rows");

  const std::size_t total = rec.terrain.size();
  for (std::size_t s = 0; s < rec.stride_starts.size(); ++s) {
    const std::size_t len = rec.stride_end(s) - rec.stride_starts[s];
    if (len < kMinStrideSamples)
      throw std::runtime_error("csv: stride " + std::to_string(s) + " has " + std::to_string(len) +
                               " samples, minimum is " + std::to_string(kMinStrideSamples));
  }
  rec.channels = Tensor<double>({kImuChannels, total});
  for (std::size_t c = 0; c < kImuChannels; ++c) std::copy(values[c].begin(), values[c].end(), rec.channels.ptr() + c * total);
  rec.phase_truth = phase_from_strides(rec.stride_starts, total);
  for (std::size_t n = 0; n < total; ++n)
    if (std::fabs(declared[n].phase - rec.phase_truth[n].phase) > 1e-6 ||
        std::fabs(declared[n].rate - rec.phase_truth[n].rate) > 1e-6)
      throw std::runtime_error("csv: phase at sample " + std::to_string(n) + " inconsistent with stride boundaries");
  try {
    validate(rec);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("csv: ") + e.what());
  }
  return rec;
}

inline Recording import_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in);
}

}  // namespace gaitphase

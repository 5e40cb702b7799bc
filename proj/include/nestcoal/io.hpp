#pragma once

// File formats: SimRecord CSV streams and JSON documents.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "sim.hpp"

namespace nestcoal {

// Raised for malformed input files; the message names the field and line.
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kRecordCsvHeader = "replicate_id,l,N,tau";

// Shortest text that round-trips the double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// One row per (replicate, position): replicate_id, l (1..m), N, tau.
inline void write_records_csv(std::ostream& os, const std::vector<SimRecord>& records) {
  os << kRecordCsvHeader << '\n';
  for (const auto& r : records) {
    const std::string tau = format_double(r.tau);
    for (std::size_t l = 0; l < r.counts_at_tau_minus.size(); ++l)
      os << r.replicate_id << ',' << (l + 1) << ',' << r.counts_at_tau_minus[l] << ',' << tau << '\n';
  }
}

namespace detail {

inline std::uint64_t parse_uint_field(const std::string& text, const char* field, std::size_t line) {
  std::size_t used = 0;
  unsigned long long v = 0;
  bool ok = !text.empty() && text.front() != '-';
  if (ok) {
    try {
      v = std::stoull(text, &used);
    } catch (const std::exception&) {
      ok = false;
    }
  }
  if (!ok || used != text.size())
    throw format_error("line " + std::to_string(line) + ": field '" + field +
                       "' is not a nonnegative integer: '" + text + "'");
  return v;
}

inline double parse_double_field(const std::string& text, const char* field, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  bool ok = !text.empty();
  if (ok) {
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      ok = false;
    }
  }
  if (!ok || used != text.size())
    throw format_error("line " + std::to_string(line) + ": field '" + field +
                       "' is not a number: '" + text + "'");
  return v;
}

}  // namespace detail

// Inverse of write_records_csv. Rows of one replicate must list l = 1..m.
inline std::vector<SimRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw format_error("records file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordCsvHeader)
    throw format_error(std::string("line 1: header must be '") + kRecordCsvHeader + "'");

  std::map<std::uint64_t, SimRecord> by_rep;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 4)
      throw format_error("line " + std::to_string(lineno) + ": expected 4 fields, got " +
                         std::to_string(cols.size()));
    const auto rep = detail::parse_uint_field(cols[0], "replicate_id", lineno);
    const auto l = detail::parse_uint_field(cols[1], "l", lineno);
    const auto n = detail::parse_uint_field(cols[2], "N", lineno);
    const double tau = detail::parse_double_field(cols[3], "tau", lineno);
    if (n == 0) throw format_error("line " + std::to_string(lineno) + ": field 'N' must be >= 1");
    SimRecord& rec = by_rep[rep];
    if (l != rec.counts_at_tau_minus.size() + 1)
      throw format_error("line " + std::to_string(lineno) + ": field 'l' out of sequence for replicate " +
                         std::to_string(rep));
    if (l > 1 && rec.tau != tau)
      throw format_error("line " + std::to_string(lineno) + ": field 'tau' differs within replicate " +
                         std::to_string(rep));
    rec.replicate_id = rep;
    rec.tau = tau;
    rec.counts_at_tau_minus.push_back(n);
    rec.m = rec.counts_at_tau_minus.size();
  }
  if (by_rep.empty()) throw format_error("records file has no rows");
  std::vector<SimRecord> out;
  out.reserve(by_rep.size());
  for (auto& [id, rec] : by_rep) out.push_back(std::move(rec));
  return out;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace nestcoal

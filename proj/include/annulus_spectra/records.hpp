#pragma once

// Deterministic result records.  Emission is hand-rolled so bytes are a
// function of values alone: fixed key order, numbers through to_chars at 17
// significant digits (exact double round-trip), no locale involvement.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "planar.hpp"
#include "radial.hpp"
#include "verify.hpp"
#include "version.hpp"

namespace annulus_spectra {

inline std::string format_number(double v) {
  if (std::isnan(v))
    return "null";
  if (std::isinf(v))
    return v > 0 ? "1e999" : "-1e999"; // parses back as infinity
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string json_string(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back('"');
  for (char c : s) {
    switch (c) {
    case '"': out += "\\\""; break;
    case '\\': out += "\\\\"; break;
    case '\n': out += "\\n"; break;
    case '\r': out += "\\r"; break;
    case '\t': out += "\\t"; break;
    default:
      if (static_cast<unsigned char>(c) < 0x20) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "\\u%04x", c);
        out += buf;
      } else {
        out.push_back(c);
      }
    }
  }
  out.push_back('"');
  return out;
}

/// Values are pre-serialized JSON fragments; key order is preserved.
using JsonPairs = std::vector<std::pair<std::string, std::string>>;

inline std::string json_object(const JsonPairs& pairs) {
  std::string out = "{";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i)
      out.push_back(',');
    out += json_string(pairs[i].first);
    out.push_back(':');
    out += pairs[i].second;
  }
  out.push_back('}');
  return out;
}

inline std::string json_array(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i)
      out.push_back(',');
    out += items[i];
  }
  out.push_back(']');
  return out;
}

inline std::string json_number_array(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i)
      out.push_back(',');
    out += format_number(v[i]);
  }
  out.push_back(']');
  return out;
}

// 64-bit FNV-1a over the canonical config text.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Canonical form: keys sorted, one `key=value` per line.  Values must
/// already be normalized (numbers through format_number).
inline std::string canonical_config_string(std::vector<std::pair<std::string, std::string>> kv) {
  std::sort(kv.begin(), kv.end());
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out.push_back('=');
    out += v;
    out.push_back('\n');
  }
  return out;
}

inline std::string config_digest(const std::vector<std::pair<std::string, std::string>>& kv) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config_string(kv))));
  return std::string(buf, 16);
}

inline std::string iso8601_utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- payload serializers ------------------------------------------------

inline std::string payload_profile(const RadialProfile& prof) {
  return json_object({{"r", json_number_array(prof.r)},
                      {"u", json_number_array(prof.value)},
                      {"flux", json_number_array(prof.flux)}});
}

inline std::string payload_radial(const EigenResult& r, bool include_profile = true) {
  JsonPairs p{{"eigenvalue", format_number(r.eigenvalue)},
              {"boundary_residual", format_number(r.boundary_residual)},
              {"ode_residual", format_number(r.ode_residual)},
              {"bisection_iterations", std::to_string(r.bisection_iterations)},
              {"normalization", format_number(r.normalization)}};
  if (include_profile)
    p.emplace_back("profile", payload_profile(r.profile));
  return json_object(p);
}

inline std::string payload_planar(const EigenResult2D& r, const GridDomain& dom) {
  return json_object(
      {{"eigenvalue", format_number(r.eigenvalue)},
       {"iterations", std::to_string(r.iterations)},
       {"final_step", format_number(r.final_step)},
       {"grid",
        json_object({{"nx", std::to_string(dom.nx)},
                     {"ny", std::to_string(dom.ny)},
                     {"h", format_number(dom.h)}})},
       {"domain_volume", format_number(dom.domain_volume)},
       {"hole_volume", format_number(dom.hole_volume)}});
}

inline std::string payload_comparison(const ComparisonReport& c) {
  return json_object(
      {{"lhs", format_number(c.lhs)},
       {"rhs", format_number(c.rhs)},
       {"relation", json_string(c.relation == ComparisonReport::Relation::GE ? "GE" : "LE")},
       {"slack", format_number(c.slack)},
       {"tolerance", format_number(c.tolerance)},
       {"pass", c.pass ? "true" : "false"},
       {"provenance", json_string(c.provenance)}});
}

inline std::string payload_fit(const FitReport& f) {
  return json_object({{"slope", format_number(f.slope)},
                      {"intercept", format_number(f.intercept)},
                      {"r_squared", format_number(f.r_squared)},
                      {"xs", json_number_array(f.xs)},
                      {"ys", json_number_array(f.ys)}});
}

inline std::string payload_comparison_list(const std::vector<ComparisonReport>& checks,
                                           const std::vector<std::pair<std::string, FitReport>>& fits,
                                           bool all_pass) {
  std::vector<std::string> items;
  items.reserve(checks.size());
  for (const auto& c : checks)
    items.push_back(payload_comparison(c));
  std::vector<std::string> fit_items;
  for (const auto& [name, f] : fits)
    fit_items.push_back(json_object({{"name", json_string(name)}, {"fit", payload_fit(f)}}));
  return json_object({{"all_pass", all_pass ? "true" : "false"},
                      {"checks", json_array(items)},
                      {"fits", json_array(fit_items)}});
}

struct ResultRecord {
  std::string config_digest;
  std::string timestamp = iso8601_utc_now();
  std::string command;
  std::string payload_type;
  std::string payload; // pre-serialized JSON
};

inline std::string to_json(const ResultRecord& rec) {
  return json_object({{"config_digest", json_string(rec.config_digest)},
                      {"tool_version", json_string(tool_version)},
                      {"timestamp", json_string(rec.timestamp)},
                      {"command", json_string(rec.command)},
                      {"payload_type", json_string(rec.payload_type)},
                      {"payload", rec.payload}}) +
         "\n";
}

// ---- CSV ----------------------------------------------------------------

inline std::string csv_field(std::string_view s) {
  bool quote = s.find_first_of(",\"\n") != std::string_view::npos;
  if (!quote)
    return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += "\"\"";
    else
      out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i)
      out.push_back(',');
    out += csv_field(fields[i]);
  }
  out.push_back('\n');
  return out;
}

} // namespace annulus_spectra

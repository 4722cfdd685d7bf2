#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "hetnl/core.hpp"

namespace hetnl {

/// "%.17g" formatting; round-trips doubles and is locale independent.
inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row of a validation report: (check_name, measured, bound, pass).
struct CheckRow {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string witness;
};

struct Report {
  std::vector<CheckRow> rows;

  void add(std::string name, double measured, double bound, bool pass,
           std::string witness = {}) {
    rows.push_back({std::move(name), measured, bound, pass, std::move(witness)});
  }
  void append(const Report &o) { rows.insert(rows.end(), o.rows.begin(), o.rows.end()); }

  [[nodiscard]] bool passed() const {
    for (const auto &r : rows)
      if (!r.pass) return false;
    return true;
  }
  [[nodiscard]] const CheckRow *find(const std::string &name) const {
    for (const auto &r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }

  [[nodiscard]] std::string csv() const {
    std::string out = "check_name,measured,bound,pass\n";
    for (const auto &r : rows)
      out += r.name + "," + fmt_num(r.measured) + "," + fmt_num(r.bound) + "," +
             (r.pass ? "true" : "false") + "\n";
    return out;
  }

  /// Throws ValidationError naming every failed row and its witness.
  void require() const {
    std::string msg;
    for (const auto &r : rows)
      if (!r.pass)
        msg += "\n  " + r.name + ": measured " + fmt_num(r.measured) + " vs bound " +
               fmt_num(r.bound) + (r.witness.empty() ? "" : " at " + r.witness);
    if (!msg.empty()) throw ValidationError("validation failed:" + msg);
  }
};

} // namespace hetnl

// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_REPORT_HPP_
#define TSEGRID_REPORT_HPP_

#include <sstream>
#include <string>
#include <vector>

#include "tsegrid/common.hpp"
#include "tsegrid/trainer.hpp"

namespace tsegrid {

// Evaluation tables in the layout of the experiment write-up: one row per
// cue configuration, SISNR / PESQ / STOI columns, the unprocessed mixture
// first. PESQ is not implemented and its column carries an explicit
// unavailable marker. Three fixed fractional digits, locale-independent.

inline const std::vector<std::string>& report_row_order() {
  static const std::vector<std::string> kOrder = {
      "Mix",          "Lip",           "Lip-Expr", "Lip-Face",
      "Lip-Aux",      "Lip-Expr-Face", "Lip-Expr-Face-Aux"};
  return kOrder;
}

struct EvalReport {
  double train_missing = 0.0;
  double test_missing = 0.0;
  size_t n_scenes = 0;
  uint64_t seed = 0;
  std::vector<EvalRow> rows;  // first row must be the mixture baseline

  std::string header_line() const {
    std::ostringstream os;
    os << "train_missing=" << format_fixed(train_missing, 2)
       << ",test_missing=" << format_fixed(test_missing, 2)
       << ",n_scenes=" << n_scenes << ",seed=" << seed;
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "# " << header_line() << "\n";
    os << "config,sisnr,pesq,stoi\n";
    for (const EvalRow& r : rows)
      os << r.name << "," << format_fixed(r.si_snr, 3) << ",n/a,"
         << format_fixed(r.stoi, 3) << "\n";
    return os.str();
  }

  std::string to_markdown() const {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Metric", "SISNR", "PESQ", "STOI"});
    for (const EvalRow& r : rows)
      cells.push_back({r.name, format_fixed(r.si_snr, 3), "n/a",
                       format_fixed(r.stoi, 3)});
    size_t widths[4] = {0, 0, 0, 0};
    for (const auto& row : cells)
      for (size_t c = 0; c < 4; ++c)
        widths[c] = std::max(widths[c], row[c].size());
    std::ostringstream os;
    os << "**" << header_line() << "**\n\n";
    auto emit = [&](const std::vector<std::string>& row) {
      os << "|";
      for (size_t c = 0; c < 4; ++c) {
        os << " " << row[c];
        os << std::string(widths[c] - row[c].size(), ' ') << " |";
      }
      os << "\n";
    };
    emit(cells[0]);
    os << "|";
    for (size_t c = 0; c < 4; ++c) os << std::string(widths[c] + 2, '-') << "|";
    os << "\n";
    for (size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
    return os.str();
  }
};

// parse a report back out of its CSV (used by the grid checks)
inline EvalReport parse_report_csv(const std::string& text) {
  EvalReport rep;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      std::istringstream hs(body);
      std::string field;
      while (std::getline(hs, field, ',')) {
        size_t eq = field.find('=');
        if (eq == std::string::npos) continue;
        std::string key = field.substr(0, eq);
        while (!key.empty() && key.front() == ' ') key.erase(key.begin());
        std::string val = field.substr(eq + 1);
        if (key == "train_missing") rep.train_missing = std::stod(val);
        if (key == "test_missing") rep.test_missing = std::stod(val);
        if (key == "n_scenes") rep.n_scenes = std::stoul(val);
        if (key == "seed") rep.seed = std::stoull(val);
      }
      continue;
    }
    if (line.rfind("config,", 0) == 0) continue;
    std::istringstream ls(line);
    EvalRow row;
    std::string field;
    std::getline(ls, row.name, ',');
    std::getline(ls, field, ',');
    row.si_snr = std::stod(field);
    std::getline(ls, field, ',');  // pesq marker
    std::getline(ls, field, ',');
    row.stoi = std::stod(field);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace tsegrid

#endif  // TSEGRID_REPORT_HPP_

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sla/core/error.hpp"

namespace sla {

struct TrainRecord {
  std::int64_t step = 0;
  double loss = 0;
  double accuracy = 0;
  double lr = 0;
  double wall_ms = 0;
};

struct ValRecord {
  std::int64_t step = 0;
  double loss = 0;
  double accuracy = 0;
};

inline constexpr const char* kTrainLogHeader = "step,loss,masked_token_accuracy,lr,wall_ms";
inline constexpr const char* kValLogHeader = "val_step,val_loss,val_accuracy";

namespace detail {

// Shortest text that reads back to the same double.
inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::vector<std::string>> read_csv_rows(const std::string& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw FormatError(path + ": expected header '" + header + "'", 0);
      seen_header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

/// Per-step training records and periodic validation records.
struct TrainLog {
  std::vector<TrainRecord> train;
  std::vector<ValRecord> val;

  /// Both CSVs start with a "# config_hash=<hash>" comment line.
  void write(const std::string& train_path, const std::string& val_path, const std::string& config_hash) const {
    {
      std::ofstream out(train_path);
      if (!out) throw std::runtime_error("cannot write " + train_path);
      out << "# config_hash=" << config_hash << '\n' << kTrainLogHeader << '\n';
      for (const auto& r : train) {
        out << r.step << ',' << detail::exact(r.loss) << ',' << detail::exact(r.accuracy) << ','
            << detail::exact(r.lr) << ',' << detail::exact(r.wall_ms) << '\n';
      }
    }
    std::ofstream out(val_path);
    if (!out) throw std::runtime_error("cannot write " + val_path);
    out << "# config_hash=" << config_hash << '\n' << kValLogHeader << '\n';
    for (const auto& r : val) {
      out << r.step << ',' << detail::exact(r.loss) << ',' << detail::exact(r.accuracy) << '\n';
    }
  }

  static TrainLog read(const std::string& train_path, const std::string& val_path) {
    TrainLog log;
    for (const auto& c : detail::read_csv_rows(train_path, kTrainLogHeader)) {
      if (c.size() != 5) throw FormatError(train_path + ": malformed row", 0);
      log.train.push_back({std::stoll(c[0]), std::stod(c[1]), std::stod(c[2]), std::stod(c[3]), std::stod(c[4])});
    }
    for (const auto& c : detail::read_csv_rows(val_path, kValLogHeader)) {
      if (c.size() != 3) throw FormatError(val_path + ": malformed row", 0);
      log.val.push_back({std::stoll(c[0]), std::stod(c[1]), std::stod(c[2])});
    }
    return log;
  }

  /// Drops records after `step`.
  void truncate(std::int64_t step) {
    std::erase_if(train, [&](const TrainRecord& r) { return r.step > step; });
    std::erase_if(val, [&](const ValRecord& r) { return r.step > step; });
  }
};

/// Same records ignoring wall-clock time.
inline bool same_trajectory(const TrainLog& a, const TrainLog& b) {
  if (a.train.size() != b.train.size() || a.val.size() != b.val.size()) return false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    const auto &x = a.train[i], &y = b.train[i];
    if (x.step != y.step || x.loss != y.loss || x.accuracy != y.accuracy || x.lr != y.lr) return false;
  }
  for (std::size_t i = 0; i < a.val.size(); ++i) {
    const auto &x = a.val[i], &y = b.val[i];
    if (x.step != y.step || x.loss != y.loss || x.accuracy != y.accuracy) return false;
  }
  return true;
}

}  // namespace sla

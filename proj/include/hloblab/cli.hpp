#pragma once

// Pipeline orchestration behind the `hloblab` executable.
//
// Artifacts under <run.out_dir>:
//   ingest/clean/<T>_<D>_{orderbook,message}_10.csv, ingest/norm_<D>.json, ingest/summary.json
//   mi/daily_<D>.json, mi/average.json, mi/average.csv
//   tmfg/simplices.json, tmfg/graph.json
//   train/checkpoint.bin, train/history.csv, train/summary.json
//   eval/report.json
//   report/metrics_h<H>.csv, report/quadrants_h<H>.csv
// and <stage>/manifest.json (config digest, seed, wall-clock) for every stage.

#include "hloblab/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace hloblab::cli {

enum ExitCode : int { kSuccess = 0, kUserError = 1, kInternalError = 2 };

/// `args` excludes the program name. Never throws.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const config::EnvLookup& env = nullptr);

}  // namespace hloblab::cli

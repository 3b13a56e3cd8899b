#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trisim/config.hpp"
#include "trisim/grad_check.hpp"

namespace trisim {

// ---------------------------------------------------------------------------
// gradient-check suite (double precision)

struct GradCheckRow {
  std::string name;
  GradCheckResult result;
  bool pass = false;
};

// Per-primitive checks on seed-randomized small shapes.
std::vector<GradCheckRow> run_primitive_gradchecks(std::uint64_t seed,
                                                   double threshold = 1e-6,
                                                   const std::string& inject_fault = "");

// Composite-module and full-model checks at the standard desk dims
// (H=2, L=3, D=4, D'=2, D''=2, k=2).
std::vector<GradCheckRow> run_composite_gradchecks(std::uint64_t seed,
                                                   double threshold = 1e-6,
                                                   const std::string& inject_fault = "");

// Primitives + composites, the `gradcheck` command's payload.
std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, double threshold = 1e-6,
                                              const std::string& inject_fault = "");

// ---------------------------------------------------------------------------
// experiment grids (ablation, robustness, latency)

struct CellResult {
  std::string cell;
  std::string feature_extraction;
  std::string attention;
  std::string fusion;
  std::vector<double> accuracies;  // one per seed
  double accuracy_median = 0.0;
  std::size_t params = 0;
  double ms_per_pair = 0.0;
};

struct GridSpec {
  std::string name;                 // main | fa | rfm
  std::vector<RunConfig> configs;   // one per cell
  std::vector<std::string> cells;   // cell labels, aligned with configs
};

// Expands a named grid around a base config. Throws ArgumentError for an
// unknown grid or cell name.
GridSpec make_grid(const RunConfig& base, const std::string& grid);

class SynthDataset;  // dataset.hpp

// Trains every cell (seeds = base seed + 0..n_seeds-1 per cell), then runs a
// sequential latency pass. Cell training parallelism is capped by the
// TRISIM_THREADS environment variable (default: hardware concurrency).
std::vector<CellResult> run_grid(const GridSpec& grid, const std::string& data_dir,
                                 int n_seeds, bool quiet);

struct RobustCell {
  std::string strategy;
  bool adaptive = false;
  std::vector<double> accuracies;
  double mean = 0.0, spread = 0.0, acc_min = 0.0, acc_max = 0.0;
};

// The 8-cell robustness sweep: 4 block strategies x {adaptive, fixed}.
std::vector<RobustCell> run_robustness(const RunConfig& base, const std::string& data_dir,
                                       int n_seeds, bool quiet);

// report writers
void write_grid_csv(const std::string& path, const std::vector<CellResult>& rows);
void write_robust_csv(const std::string& path, const std::vector<RobustCell>& rows);
std::string format_grid_table(const std::vector<CellResult>& rows);
std::string format_robust_table(const std::vector<RobustCell>& rows);

}  // namespace trisim

#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

#include "fedlpa/federation.hpp"

namespace fedlpa {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

// Throws InputError on an empty sample.
MeanStd mean_std(std::span<const double> values);

// dataset,partition,beta_or_k,clients,epochs,method,seed,accuracy,comm_floats,solver_iters,seconds
void write_results_csv(std::ostream& out, const ExperimentReport& report);

// One line per method: accuracy mean +- std in percent over successful seeds,
// followed by any failed (method, seed) pairs.
void write_summary(std::ostream& out, const ExperimentReport& report);

// round,method,seed,accuracy for every series.
void write_rounds_csv(std::ostream& out, std::span<const RoundSeries> series);

// Writes results.csv and summary.txt under out_dir, creating it if needed.
// Throws IoError naming the path on failure.
void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

}  // namespace fedlpa

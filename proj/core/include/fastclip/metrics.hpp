#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fastclip/common.hpp"
#include "fastclip/errors.hpp"

namespace fastclip::io {

// One row per epoch. Loss columns are exact evaluations on the held-out
// probe slice; tau columns collapse to the scalar temperature for global
// schemes and summarize the per-pair vectors for individualized ones.
struct EpochMetrics {
  long long epoch = 0;
  double probe_gcl = 0.0;
  double probe_rgclg = 0.0;
  double r1_i2t = 0.0;
  double r1_t2i = 0.0;
  double tau_min = 0.0;
  double tau_median = 0.0;
  double tau_max = 0.0;
  double gamma = 0.0;
  double lr = 0.0;
  std::uint64_t comm_elements = 0;  // cumulative ledger elements
};

extern const char* const kMetricsHeader;

void write_metrics_header(std::ostream& os);
// Floats with 10 significant digits so reruns can be compared textually.
void append_metrics_row(std::ostream& os, const EpochMetrics& m);
std::vector<EpochMetrics> read_metrics(std::istream& is);
std::vector<EpochMetrics> read_metrics_file(const std::string& path);

// Recall@1 over aligned probe embeddings: row i of each modality is matched
// iff the other modality's row i is its nearest candidate (ties go to the
// lowest index).
struct RetrievalResult {
  double r1_i2t = 0.0;
  double r1_t2i = 0.0;
};
RetrievalResult evaluate_retrieval(const Matrix& probe_e1, const Matrix& probe_e2);

}  // namespace fastclip::io

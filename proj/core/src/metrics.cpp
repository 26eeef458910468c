#include "fastclip/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace fastclip::io {

const char* const kMetricsHeader =
    "epoch,probe_gcl,probe_rgclg,r1_i2t,r1_t2i,tau_min,tau_median,tau_max,gamma,lr,"
    "comm_elements";

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

void write_metrics_header(std::ostream& os) { os << kMetricsHeader << '\n'; }

void append_metrics_row(std::ostream& os, const EpochMetrics& m) {
  os << m.epoch << ',' << fmt(m.probe_gcl) << ',' << fmt(m.probe_rgclg) << ',' << fmt(m.r1_i2t)
     << ',' << fmt(m.r1_t2i) << ',' << fmt(m.tau_min) << ',' << fmt(m.tau_median) << ','
     << fmt(m.tau_max) << ',' << fmt(m.gamma) << ',' << fmt(m.lr) << ',' << m.comm_elements
     << '\n';
}

std::vector<EpochMetrics> read_metrics(std::istream& is) {
  std::vector<EpochMetrics> rows;
  std::string line;
  if (!std::getline(is, line)) throw IoError("metrics: empty stream");
  if (line != kMetricsHeader) throw IoError("metrics: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 11) throw IoError("metrics: malformed row '" + line + "'");
    EpochMetrics m;
    m.epoch = std::stoll(cells[0]);
    m.probe_gcl = std::stod(cells[1]);
    m.probe_rgclg = std::stod(cells[2]);
    m.r1_i2t = std::stod(cells[3]);
    m.r1_t2i = std::stod(cells[4]);
    m.tau_min = std::stod(cells[5]);
    m.tau_median = std::stod(cells[6]);
    m.tau_max = std::stod(cells[7]);
    m.gamma = std::stod(cells[8]);
    m.lr = std::stod(cells[9]);
    m.comm_elements = std::stoull(cells[10]);
    rows.push_back(m);
  }
  return rows;
}

std::vector<EpochMetrics> read_metrics_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("metrics: cannot open '" + path + "'");
  return read_metrics(is);
}

RetrievalResult evaluate_retrieval(const Matrix& probe_e1, const Matrix& probe_e2) {
  if (probe_e1.rows() != probe_e2.rows() || probe_e1.cols() != probe_e2.cols()) {
    throw ShapeError("evaluate_retrieval: probe shapes disagree");
  }
  const Eigen::Index m = probe_e1.rows();
  if (m < 2) throw DegenerateBatchError("evaluate_retrieval: need at least 2 probes");
  const Matrix s = probe_e1 * probe_e2.transpose();
  int hits_i2t = 0;
  int hits_t2i = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index best_j = 0;
    for (Eigen::Index j = 1; j < m; ++j) {
      if (s(i, j) > s(i, best_j)) best_j = j;
    }
    if (best_j == i) ++hits_i2t;
    Eigen::Index best_i = 0;
    for (Eigen::Index r = 1; r < m; ++r) {
      if (s(r, i) > s(best_i, i)) best_i = r;
    }
    if (best_i == i) ++hits_t2i;
  }
  return {static_cast<double>(hits_i2t) / static_cast<double>(m),
          static_cast<double>(hits_t2i) / static_cast<double>(m)};
}

}  // namespace fastclip::io

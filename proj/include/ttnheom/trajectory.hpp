#pragma once

#include "ttnheom/linalg.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace ttnheom {

struct Sample {
  double t_fs = 0.0;
  Mat rho;
  double purity = 1.0;
  Index max_rank = 0;
  Index ttn_size = 0;
  double wall_ms = 0.0;
  std::vector<Index> ranks;
};

struct Trajectory {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

double purity(const Mat& rho);

// t_fs, re_rho_ij, im_rho_ij for i <= j, purity, max_rank, ttn_size, wall_ms
std::string csv_header(int dim);
std::string csv_row(const Sample& s);

// Parses a CSV written by csv_row back into samples (ranks are not stored in the CSV).
std::vector<Sample> read_csv(const std::string& path);

// Largest element-wise |rho_a - rho_b| over samples matched by index.
double max_rho_difference(const Trajectory& a, const Trajectory& b);

}  // namespace ttnheom

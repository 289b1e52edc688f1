#include "ttnheom/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ttnheom {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double purity(const Mat& rho) { return (rho * rho).trace().real(); }

std::string csv_header(int dim) {
  std::string h = "t_fs";
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) {
      const std::string ij = std::to_string(i) + std::to_string(j);
      h += ",re_rho_" + ij + ",im_rho_" + ij;
    }
  h += ",purity,max_rank,ttn_size,wall_ms";
  return h;
}

std::string csv_row(const Sample& s) {
  std::string r = fmt(s.t_fs);
  for (Index i = 0; i < s.rho.rows(); ++i)
    for (Index j = i; j < s.rho.cols(); ++j) r += "," + fmt(s.rho(i, j).real()) + "," + fmt(s.rho(i, j).imag());
  r += "," + fmt(s.purity) + "," + std::to_string(s.max_rank) + "," + std::to_string(s.ttn_size) + "," +
       fmt(s.wall_ms);
  return r;
}

std::vector<Sample> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  int cols = 1;
  for (char c : line) cols += c == ',';
  const int pairs = (cols - 5) / 2;
  int dim = 0;
  while (dim * (dim + 1) / 2 < pairs) ++dim;
  if (dim * (dim + 1) / 2 != pairs) throw std::runtime_error(path + ": unexpected column count");
  std::vector<Sample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (static_cast<int>(v.size()) != cols) break;
    Sample s;
    s.t_fs = v[0];
    s.rho = Mat::Zero(dim, dim);
    size_t k = 1;
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) {
        s.rho(i, j) = cplx(v[k], v[k + 1]);
        s.rho(j, i) = std::conj(s.rho(i, j));
        k += 2;
      }
    s.purity = v[k];
    s.max_rank = static_cast<Index>(v[k + 1]);
    s.ttn_size = static_cast<Index>(v[k + 2]);
    s.wall_ms = v[k + 3];
    out.push_back(std::move(s));
  }
  return out;
}

double max_rho_difference(const Trajectory& a, const Trajectory& b) {
  if (a.samples.size() != b.samples.size()) throw std::invalid_argument("trajectories have different lengths");
  double d = 0.0;
  for (size_t k = 0; k < a.samples.size(); ++k)
    d = std::max(d, (a.samples[k].rho - b.samples[k].rho).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace ttnheom

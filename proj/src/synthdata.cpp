#include "gmje/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace gmje {

double branch_a(int branch, double x) {
  switch (branch) {
    case 0: return x * x + 0.5;
    case 1: return -x * x - 0.5;
    case 2: return x * x * x;
    default: throw std::invalid_argument("branch_a: branch out of range");
  }
}

double branch_b(int branch, double x) {
  switch (branch) {
    case 0: return std::sin(3.0 * x);
    case 1: return -std::sin(3.0 * x);
    case 2: return 0.0;
    default: throw std::invalid_argument("branch_b: branch out of range");
  }
}

double branch_value(SyntheticDataset::Kind kind, int branch, double x) {
  return kind == SyntheticDataset::Kind::A ? branch_a(branch, x) : branch_b(branch, x);
}

double conditional_mean(SyntheticDataset::Kind kind, double x) {
  return (branch_value(kind, 0, x) + branch_value(kind, 1, x) + branch_value(kind, 2, x)) / 3.0;
}

namespace {
SyntheticDataset generate(SyntheticDataset::Kind kind, int n, double noise, CounterRng& rng) {
  if (n < 1) throw std::invalid_argument("gen_dataset: need n >= 1");
  SyntheticDataset data;
  data.kind = kind;
  data.noise_sigma = noise;
  data.seed = rng.seed();
  data.x_c.resize(n);
  data.x_t.resize(n);
  data.branch_id.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform(-1.0, 1.0);
    int branch = static_cast<int>(rng.uniform_index(3));
    double y = branch_value(kind, branch, x) + noise * rng.normal();
    data.x_c(i) = x;
    data.x_t(i) = y;
    data.branch_id[i] = branch;
  }
  return data;
}
}  // namespace

SyntheticDataset gen_dataset_a(int n, double noise, CounterRng& rng) {
  return generate(SyntheticDataset::Kind::A, n, noise, rng);
}

SyntheticDataset gen_dataset_b(int n, double noise, CounterRng& rng) {
  return generate(SyntheticDataset::Kind::B, n, noise, rng);
}

VectorXd eval_grid(int count) {
  if (count < 2) throw std::invalid_argument("eval_grid: need count >= 2");
  VectorXd grid(count);
  double step = 2.0 / (count - 1);
  for (int i = 0; i < count; ++i) grid(i) = -1.0 + i * step;
  return grid;
}

void write_dataset_csv(const SyntheticDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  out << "x_c,x_t,branch_id\n";
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << data.x_c(i) << ',' << data.x_t(i) << ',' << data.branch_id[i] << '\n';
  }
}

SyntheticDataset read_dataset_csv(const std::string& path, SyntheticDataset::Kind kind,
                                  double noise_sigma, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file");
  std::vector<double> xc, xt;
  std::vector<int> branch;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    xc.push_back(std::stod(field));
    std::getline(ss, field, ',');
    xt.push_back(std::stod(field));
    std::getline(ss, field, ',');
    branch.push_back(std::stoi(field));
  }
  SyntheticDataset data;
  data.kind = kind;
  data.noise_sigma = noise_sigma;
  data.seed = seed;
  data.x_c = Eigen::Map<VectorXd>(xc.data(), static_cast<Eigen::Index>(xc.size()));
  data.x_t = Eigen::Map<VectorXd>(xt.data(), static_cast<Eigen::Index>(xt.size()));
  data.branch_id = std::move(branch);
  return data;
}

}  // namespace gmje

#include "hotet/distribution.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hotet/errors.hpp"

namespace hotet {

void EmpiricalDistribution::validate() const {
  if (points.rows() < 1) throw ShapeError("distribution: needs at least one atom");
  if (weights.size() != points.rows())
    throw ShapeError("distribution: weight count does not match atom count");
  if (!points.allFinite() || !weights.allFinite())
    throw NumericalError("distribution: non-finite entries");
  if ((weights.array() < 0.0).any()) throw ShapeError("distribution: negative weight");
  const double total = weights.sum();
  if (std::abs(total - 1.0) > 1e-9)
    throw ShapeError("distribution: weights sum to " + std::to_string(total) + ", expected 1");
  if (weights.maxCoeff() <= 0.0) throw ShapeError("distribution: all weights are zero");
}

EmpiricalDistribution EmpiricalDistribution::uniform(Eigen::MatrixXd pts) {
  EmpiricalDistribution d;
  const Eigen::Index n = pts.rows();
  d.points = std::move(pts);
  d.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return d;
}

Eigen::MatrixXd EmpiricalDistribution::sample(Eigen::Index n, Rng& rng) const {
  Eigen::VectorXd cdf(weights.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    acc += weights(i);
    cdf(i) = acc;
  }
  Eigen::MatrixXd out(n, points.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double u = rng.uniform() * acc;
    Eigen::Index lo = 0, hi = weights.size() - 1;
    while (lo < hi) {
      const Eigen::Index mid = (lo + hi) / 2;
      if (cdf(mid) < u)
        lo = mid + 1;
      else
        hi = mid;
    }
    out.row(k) = points.row(lo);
  }
  return out;
}

EmpiricalDistribution read_distribution(std::istream& in) {
  Eigen::Index n = 0, d = 0;
  if (!(in >> n >> d) || n < 1 || d < 1)
    throw ConfigError("distribution file: bad header (expected 'n d')");
  std::string rest;
  std::getline(in, rest);

  Eigen::MatrixXd pts(n, d);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  bool weighted = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("distribution file: truncated");
    std::istringstream row(line);
    std::vector<double> vals;
    double x = 0;
    while (row >> x) vals.push_back(x);
    if (static_cast<Eigen::Index>(vals.size()) == d + 1) {
      if (i > 0 && !weighted) throw ConfigError("distribution file: inconsistent columns");
      weighted = true;
      w(i) = vals.back();
    } else if (static_cast<Eigen::Index>(vals.size()) != d || weighted) {
      throw ConfigError("distribution file: row " + std::to_string(i) + " has wrong arity");
    }
    for (Eigen::Index j = 0; j < d; ++j) pts(i, j) = vals[static_cast<std::size_t>(j)];
  }
  EmpiricalDistribution dist{std::move(pts), std::move(w)};
  if (weighted) {
    const double total = dist.weights.sum();
    if (total <= 0) throw ConfigError("distribution file: nonpositive total weight");
    dist.weights /= total;
  }
  dist.validate();
  return dist;
}

EmpiricalDistribution read_distribution_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open distribution file: " + path);
  return read_distribution(in);
}

void write_distribution(std::ostream& out, const EmpiricalDistribution& d, bool with_weights) {
  out << d.size() << ' ' << d.dim() << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.dim(); ++j) out << (j ? " " : "") << d.points(i, j);
    if (with_weights) out << ' ' << d.weights(i);
    out << '\n';
  }
}

}  // namespace hotet

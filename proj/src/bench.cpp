#include "hotet/bench.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <limits>

#include "hotet/errors.hpp"

namespace hotet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void GaussianMixture::validate() const {
  const int k = components();
  const int dd = dim();
  if (k < 1 || dd < 1) throw ShapeError("mixture: empty");
  if (weights.size() != k) throw ShapeError("mixture: weight count mismatch");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
    throw ShapeError("mixture: weights must lie on the simplex");
  if (static_cast<int>(covs.size()) != k) throw ShapeError("mixture: covariance count mismatch");
  for (const auto& c : covs) {
    if (c.rows() != dd || c.cols() != dd) throw ShapeError("mixture: covariance shape mismatch");
    if (!c.isApprox(c.transpose(), 1e-10)) throw ShapeError("mixture: covariance not symmetric");
    Eigen::LLT<MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) throw ShapeError("mixture: covariance not positive definite");
  }
}

MatrixXd GaussianMixture::sample(Eigen::Index n, Rng& rng) const {
  const int dd = dim();
  std::vector<MatrixXd> chol;
  chol.reserve(covs.size());
  for (const auto& c : covs) chol.push_back(Eigen::LLT<MatrixXd>(c).matrixL());

  VectorXd cdf(weights.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    acc += weights(i);
    cdf(i) = acc;
  }
  MatrixXd out(n, dd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    Eigen::Index comp = 0;
    while (comp + 1 < weights.size() && cdf(comp) < u) ++comp;
    const VectorXd z = rng.normal_vec(dd);
    out.row(i) = (means.row(comp).transpose() + chol[static_cast<std::size_t>(comp)] * z);
  }
  return out;
}

VectorXd GaussianMixture::mean() const {
  return means.transpose() * weights;
}

MatrixXd GaussianMixture::covariance() const {
  const VectorXd m = mean();
  MatrixXd cov = MatrixXd::Zero(dim(), dim());
  for (int k = 0; k < components(); ++k) {
    const VectorXd mk = means.row(k).transpose();
    cov += weights(k) * (covs[static_cast<std::size_t>(k)] + mk * mk.transpose());
  }
  return cov - m * m.transpose();
}

GaussianMixture GaussianMixture::single(VectorXd mean, MatrixXd cov) {
  GaussianMixture gm;
  gm.means = mean.transpose();
  gm.covs.push_back(std::move(cov));
  gm.weights = VectorXd::Ones(1);
  gm.validate();
  return gm;
}

GaussianMixture random_mixture(int d, Rng& rng, int components) {
  GaussianMixture gm;
  gm.means.resize(components, d);
  for (int k = 0; k < components; ++k)
    for (int j = 0; j < d; ++j) gm.means(k, j) = rng.uniform(-4.0, 4.0);
  for (int k = 0; k < components; ++k) {
    const MatrixXd g = rng.normal_mat(d, d);
    gm.covs.push_back(g * g.transpose() / static_cast<double>(d) +
                      0.1 * MatrixXd::Identity(d, d));
  }
  VectorXd w(components);
  for (int k = 0; k < components; ++k) w(k) = -std::log(1.0 - rng.uniform());
  gm.weights = w / w.sum();
  gm.validate();
  return gm;
}

EmpiricalDistribution sample_distribution(const GaussianMixture& gm, Eigen::Index n,
                                          std::uint64_t seed) {
  Rng rng(Rng::derive(seed, "mixture_sample"));
  return EmpiricalDistribution::uniform(gm.sample(n, rng));
}

namespace {

MatrixXd spd_power(const MatrixXd& s, double exponent) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  if (es.info() != Eigen::Success) throw NumericalError("spd_power: eigendecomposition failed");
  VectorXd lam = es.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) <= 0.0) throw ShapeError("spd_power: matrix not positive definite");
    lam(i) = std::pow(lam(i), exponent);
  }
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

LinearMap gaussian_ot_map(const VectorXd& m1, const MatrixXd& s1, const VectorXd& m2,
                          const MatrixXd& s2) {
  const MatrixXd s1_half = spd_power(s1, 0.5);
  const MatrixXd s1_nhalf = spd_power(s1, -0.5);
  const MatrixXd mid = spd_power(s1_half * s2 * s1_half, 0.5);
  LinearMap map;
  map.A = s1_nhalf * mid * s1_nhalf;
  map.c = m2 - map.A * m1;
  return map;
}

void GroundTruthPair::sample_fwd(Eigen::Index n, std::uint64_t seed, MatrixXd& X,
                                 MatrixXd& TX) const {
  Rng rng(Rng::derive(seed, "pair_fwd"));
  switch (kind) {
    case Kind::kLinear: {
      X = base.sample(n, rng);
      TX = (X * lin.A.transpose()).rowwise() + lin.c.transpose();
      break;
    }
    case Kind::kBrenierFwd: {
      X = base.sample(n, rng);
      TX = transport_map_batch(potential, X);
      break;
    }
    case Kind::kBrenierInv: {
      // mu is the pushforward side: x = grad u(z) for z ~ base, and the
      // exact forward image of x is the z it came from.
      TX = base.sample(n, rng);
      X = transport_map_batch(potential, TX);
      break;
    }
  }
}

void GroundTruthPair::sample_inv(Eigen::Index n, std::uint64_t seed, MatrixXd& Y,
                                 MatrixXd& TinvY) const {
  GroundTruthPair sw = swapped();
  sw.sample_fwd(n, seed, Y, TinvY);
}

MatrixXd GroundTruthPair::sample_mu(Eigen::Index n, std::uint64_t seed) const {
  MatrixXd X, TX;
  sample_fwd(n, seed, X, TX);
  return X;
}

MatrixXd GroundTruthPair::sample_nu(Eigen::Index n, std::uint64_t seed) const {
  MatrixXd Y, T;
  sample_inv(n, seed, Y, T);
  return Y;
}

double GroundTruthPair::var_nu(Eigen::Index n, std::uint64_t seed) const {
  if (kind == Kind::kLinear) return (lin.A * base.covariance() * lin.A.transpose()).trace();
  if (kind == Kind::kBrenierInv) return base.covariance().trace();
  const MatrixXd Y = sample_nu(n, Rng::derive(seed, "var_nu"));
  const Eigen::RowVectorXd m = Y.colwise().mean();
  return (Y.rowwise() - m).squaredNorm() / static_cast<double>(Y.rows() - 1);
}

double GroundTruthPair::var_mu(Eigen::Index n, std::uint64_t seed) const {
  return swapped().var_nu(n, seed);
}

GroundTruthPair GroundTruthPair::swapped() const {
  GroundTruthPair sw = *this;
  switch (kind) {
    case Kind::kLinear: {
      sw.base = GaussianMixture::single(lin.A * base.mean() + lin.c,
                                        lin.A * base.covariance() * lin.A.transpose());
      const MatrixXd a_inv = lin.A.inverse();
      sw.lin.A = a_inv;
      sw.lin.c = -(a_inv * lin.c);
      break;
    }
    case Kind::kBrenierFwd:
      sw.kind = Kind::kBrenierInv;
      break;
    case Kind::kBrenierInv:
      sw.kind = Kind::kBrenierFwd;
      break;
  }
  return sw;
}

GroundTruthPair make_pair_linear(const VectorXd& m1, const MatrixXd& s1, const VectorXd& m2,
                                 const MatrixXd& s2) {
  GroundTruthPair pair;
  pair.kind = GroundTruthPair::Kind::kLinear;
  pair.d = static_cast<int>(m1.size());
  pair.base = GaussianMixture::single(m1, s1);
  pair.lin = gaussian_ot_map(m1, s1, m2, s2);
  return pair;
}

GroundTruthPair make_pair_brenier(GaussianMixture mu, IcnnParams convex_potential) {
  mu.validate();
  icnn_validate(convex_potential);
  if (mu.dim() != convex_potential.spec.input_dim)
    throw ShapeError("make_pair_brenier: dimension mismatch");
  GroundTruthPair pair;
  pair.kind = GroundTruthPair::Kind::kBrenierFwd;
  pair.d = mu.dim();
  pair.base = std::move(mu);
  pair.potential = std::move(convex_potential);
  return pair;
}

GroundTruthPair make_pair_brenier_inv(GaussianMixture nu, IcnnParams convex_potential) {
  GroundTruthPair pair = make_pair_brenier(std::move(nu), std::move(convex_potential));
  pair.kind = GroundTruthPair::Kind::kBrenierInv;
  return pair;
}

IcnnParams random_convex_potential(int d, Rng& rng, double scale) {
  IcnnSpec spec{d, {std::max(16, d), std::max(16, d)}};
  IcnnParams p = icnn_random(spec, rng, 0.3);
  for (auto& w : p.W) w *= scale;
  for (auto& b : p.b) b = rng.normal_vec(b.size(), 0.3 * scale);
  // Keep the final layer's direct x-path moderate so the map stays a
  // nonlinear perturbation of the identity rather than a huge affine shift.
  p.W.back() *= 0.5;
  return p;
}

double l2_uvp(const MapFn& T, const GroundTruthPair& pair, Eigen::Index n_eval,
              std::uint64_t seed) {
  MatrixXd X, TX;
  pair.sample_fwd(n_eval, Rng::derive(seed, "uvp_samples"), X, TX);
  const MatrixXd approx = T(X);
  if (approx.rows() != X.rows() || approx.cols() != X.cols())
    throw ShapeError("l2_uvp: mapped batch has wrong shape");
  const double err = (approx - TX).squaredNorm() / static_cast<double>(X.rows());
  const double var = pair.var_nu(n_eval, seed);
  return 100.0 * err / var;
}

double cos_sim(const MapFn& T, const GroundTruthPair& pair, Eigen::Index n_eval,
               std::uint64_t seed) {
  MatrixXd X, TX;
  pair.sample_fwd(n_eval, Rng::derive(seed, "cs_samples"), X, TX);
  const MatrixXd d1 = T(X) - X;
  const MatrixXd d2 = TX - X;
  const double n1 = d1.norm();
  const double n2 = d2.norm();
  if (n1 == 0.0 || n2 == 0.0) return 0.0;
  return d1.cwiseProduct(d2).sum() / (n1 * n2);
}

EvalReport evaluate_pair(const IcnnParams& fwd, const IcnnParams& inv,
                         const GroundTruthPair& pair, Eigen::Index n_eval, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport r;
  r.n_eval = n_eval;
  r.seed = seed;
  const GroundTruthPair sw = pair.swapped();
  r.uvp_fwd = l2_uvp(icnn_map_fn(fwd), pair, n_eval, seed);
  r.cs_fwd = cos_sim(icnn_map_fn(fwd), pair, n_eval, seed);
  r.uvp_inv = l2_uvp(icnn_map_fn(inv), sw, n_eval, seed);
  r.cs_inv = cos_sim(icnn_map_fn(inv), sw, n_eval, seed);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<int> min_cost_assignment(const MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ShapeError("assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // Hungarian algorithm with dual potentials; 1-based with column 0 virtual.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] > 0)
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
  return row_to_col;
}

DiscreteOtResult discrete_ot_oracle(const MatrixXd& X, const MatrixXd& Y) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols())
    throw ShapeError("discrete_ot_oracle: sample sets must have equal shape");
  if (X.rows() > 512) throw ShapeError("discrete_ot_oracle: n > 512 (exactness over speed)");
  const Eigen::Index n = X.rows();
  MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (X.row(i) - Y.row(j)).squaredNorm();
  DiscreteOtResult res;
  res.assignment = min_cost_assignment(cost);
  for (Eigen::Index i = 0; i < n; ++i)
    res.mean_cost += cost(i, res.assignment[static_cast<std::size_t>(i)]);
  res.mean_cost /= static_cast<double>(n);
  return res;
}

}  // namespace hotet

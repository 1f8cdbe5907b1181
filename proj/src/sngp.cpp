#include "vmp/sngp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>

#include "vmp/error.hpp"
#include "vmp/rng.hpp"

namespace vmp {

using nn::Tensor;

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const EMat>;
using MapM = Eigen::Map<EMat>;

MapC map_of(const Tensor& t) {
  return MapC(t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MapM map_of(Tensor& t) {
  return MapM(t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

void validate_sngp_config(const SngpConfig& cfg) {
  if (cfg.rff_dim < 2) throw ValueError("sngp config: rff_dim must be >= 2");
  if (!(cfg.discount > 0.0 && cfg.discount < 1.0)) throw ValueError("sngp config: discount must be in (0, 1)");
  if (!(cfg.ridge > 0.0)) throw ValueError("sngp config: ridge must be positive");
  if (!(cfg.inv_lengthscale > 0.0)) throw ValueError("sngp config: inv_lengthscale must be positive");
  if (cfg.sn_iters < 1) throw ValueError("sngp config: sn_iters must be >= 1");
  if (!(cfg.sn_bound > 0.0)) throw ValueError("sngp config: sn_bound must be positive");
  if (cfg.output_dim < 1) throw ValueError("sngp config: output_dim must be >= 1");
}

SngpState init_sngp_state(const SngpConfig& cfg, int embedding_dim, std::mt19937_64& rng) {
  validate_sngp_config(cfg);
  if (embedding_dim < 1) throw ValueError("sngp: embedding dimension must be positive");
  SngpState state;
  state.cfg = cfg;
  const std::size_t dl = static_cast<std::size_t>(cfg.rff_dim);
  const std::size_t d = static_cast<std::size_t>(embedding_dim);
  state.w_l = Tensor::zeros({dl, d});
  for (double& v : state.w_l.values) v = normal(rng, 0.0, cfg.inv_lengthscale);
  state.b_l = Tensor::zeros({1, dl});
  for (double& v : state.b_l.values) v = uniform_real(rng, 0.0, 2.0 * M_PI);
  state.neg_wl_t = Tensor::zeros({d, dl});
  for (std::size_t r = 0; r < dl; ++r)
    for (std::size_t c = 0; c < d; ++c) state.neg_wl_t.at(c, r) = -state.w_l.at(r, c);
  state.precision = Tensor::zeros({dl, dl});
  reset_covariance(state);
  return state;
}

Tensor rff(const SngpState& state, const Tensor& d) {
  if (d.rank() != 2 || d.rows() != 1 || d.cols() != state.neg_wl_t.rows())
    throw ValueError("rff: embedding shape mismatch");
  const std::size_t dl = state.b_l.cols();
  Tensor phi = Tensor::zeros({1, dl});
  map_of(phi).noalias() = map_of(d) * map_of(state.neg_wl_t);
  const double amp = std::sqrt(2.0 / static_cast<double>(dl));
  for (std::size_t i = 0; i < dl; ++i) phi.values[i] = amp * std::cos(phi.values[i] + state.b_l.values[i]);
  return phi;
}

nn::Var rff(nn::Tape& tape, const SngpState& state, nn::Var d) {
  nn::Var z = tape.add(tape.matmul(d, tape.constant(state.neg_wl_t)), tape.constant(state.b_l));
  const double amp = std::sqrt(2.0 / static_cast<double>(state.cfg.rff_dim));
  return tape.scale(tape.cosine(z), amp);
}

void precision_update(SngpState& state, const Tensor& phi_batch) {
  const std::size_t dl = state.precision.rows();
  if (phi_batch.rank() != 2 || (phi_batch.rows() > 0 && phi_batch.cols() != dl))
    throw ValueError("precision_update: feature width mismatch");
  for (double v : phi_batch.values)
    if (!std::isfinite(v)) throw NumericError("precision_update: non-finite feature");
  const double m = state.cfg.discount;
  MapM p = map_of(state.precision);
  p *= m;
  if (phi_batch.rows() > 0) {
    MapC phi = map_of(phi_batch);
    p.noalias() += (1.0 - m) * (phi.transpose() * phi);
  }
  p = ((p + p.transpose()) * 0.5).eval();
  state.covariance_cache.reset();
}

void reset_covariance(SngpState& state) {
  const std::size_t dl = state.precision.rows();
  for (double& v : state.precision.values) v = 0.0;
  for (std::size_t i = 0; i < dl; ++i) state.precision.at(i, i) = state.cfg.ridge;
  state.covariance_cache.reset();
}

const Tensor& covariance(const SngpState& state) {
  if (!state.covariance_cache.has_value()) {
    const std::size_t dl = state.precision.rows();
    Eigen::LLT<EMat> llt(map_of(state.precision));
    if (llt.info() != Eigen::Success) throw NumericError("covariance: precision is not positive definite");
    Tensor cov = Tensor::zeros({dl, dl});
    map_of(cov) = llt.solve(EMat::Identity(static_cast<Eigen::Index>(dl), static_cast<Eigen::Index>(dl)));
    state.covariance_cache = std::move(cov);
  }
  return *state.covariance_cache;
}

double uncertainty(const SngpState& state, const Tensor& phi) {
  if (phi.rank() != 2 || phi.rows() != 1 || phi.cols() != state.precision.rows())
    throw ValueError("uncertainty: feature shape mismatch");
  Eigen::LLT<EMat> llt(map_of(state.precision));
  if (llt.info() != Eigen::Success) throw NumericError("uncertainty: precision is not positive definite");
  const Eigen::VectorXd rhs = map_of(phi).transpose();
  const Eigen::VectorXd z = llt.solve(rhs);
  const double u = rhs.dot(z);
  if (!std::isfinite(u) || u < 0.0) throw NumericError("uncertainty: invalid posterior variance");
  return u;
}

SpectralPower init_spectral_power(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  SpectralPower p;
  p.u = Tensor::zeros({1, rows});
  p.v = Tensor::zeros({1, cols});
  for (double& v : p.u.values) v = normal(rng);
  double n = 0.0;
  for (double v : p.u.values) n += v * v;
  n = std::sqrt(n);
  if (n < 1e-12) {
    p.u.values[0] = 1.0;
    n = 1.0;
  }
  for (double& v : p.u.values) v /= n;
  return p;
}

double spectral_scale(const Tensor& w, SpectralPower& power, int iters, double bound) {
  if (w.rank() != 2) throw ValueError("spectral_scale: matrix required");
  double frob = 0.0;
  for (double v : w.values) frob += v * v;
  if (frob <= 0.0) throw ValueError("spectral_scale: zero matrix");
  if (power.u.cols() != w.rows() || power.v.cols() != w.cols())
    throw ValueError("spectral_scale: power vectors do not match matrix shape");

  Eigen::VectorXd u = map_of(power.u).transpose();
  Eigen::VectorXd v = map_of(power.v).transpose();
  MapC wm = map_of(w);
  for (int i = 0; i < iters; ++i) {
    v = wm.transpose() * u;
    const double nv = v.norm();
    if (nv < 1e-30) throw NumericError("spectral_scale: power iteration collapsed");
    v /= nv;
    u = wm * v;
    const double nu = u.norm();
    if (nu < 1e-30) throw NumericError("spectral_scale: power iteration collapsed");
    u /= nu;
  }
  map_of(power.u) = u.transpose();
  map_of(power.v) = v.transpose();
  const double sigma = u.dot(wm * v);
  if (!(sigma > 0.0)) throw NumericError("spectral_scale: non-positive singular value estimate");
  return std::min(1.0, bound / sigma);
}

Tensor spectral_normalize(const Tensor& w, SpectralPower& power, int iters, double bound) {
  const double s = spectral_scale(w, power, iters, bound);
  Tensor out = w;
  for (double& v : out.values) v *= s;
  return out;
}

}  // namespace vmp

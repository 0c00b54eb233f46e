#pragma once

#include "lart/common.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace lart::nn {

enum class DecayGroup { Decay, NoDecay };

template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
  DecayGroup group = DecayGroup::Decay;
  // Position for layer-wise learning-rate decay: 0 = token projections,
  // 1..L = encoder blocks, L + 1 = head.
  int depth = 0;
};

/// Flat, ordered collection of named tensors with gradient buffers. Order of
/// registration is the serialization and update order.
template <typename Scalar>
class ParameterStore {
 public:
  using Index = std::size_t;

  Index add(std::string name, Eigen::Index rows, Eigen::Index cols, DecayGroup group, int depth) {
    Parameter<Scalar> p;
    p.name = std::move(name);
    p.value = Mat<Scalar>::Zero(rows, cols);
    p.grad = Mat<Scalar>::Zero(rows, cols);
    p.group = group;
    p.depth = depth;
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  Mat<Scalar>& value(Index i) { return params_[i].value; }
  const Mat<Scalar>& value(Index i) const { return params_[i].value; }
  Mat<Scalar>& grad(Index i) { return params_[i].grad; }
  const Mat<Scalar>& grad(Index i) const { return params_[i].grad; }

  std::vector<Parameter<Scalar>>& all() { return params_; }
  const std::vector<Parameter<Scalar>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

 private:
  std::vector<Parameter<Scalar>> params_;
};

// ---------------------------------------------------------------------------
// Affine map on row-stacked inputs: Y = X W + 1 b.

template <typename Scalar>
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Eigen::Index in = 0;
  Eigen::Index out = 0;

  static Linear create(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index in,
                       Eigen::Index out, int depth) {
    Linear l;
    l.in = in;
    l.out = out;
    l.weight = store.add(name + ".weight", in, out, DecayGroup::Decay, depth);
    l.bias = store.add(name + ".bias", 1, out, DecayGroup::NoDecay, depth);
    return l;
  }

  Mat<Scalar> forward(const ParameterStore<Scalar>& store, const Mat<Scalar>& x) const {
    Mat<Scalar> y = x * store.value(weight);
    y.rowwise() += store.value(bias).row(0);
    return y;
  }

  // Accumulates parameter gradients and returns dL/dX.
  Mat<Scalar> backward(ParameterStore<Scalar>& store, const Mat<Scalar>& x,
                       const Mat<Scalar>& dy) const {
    store.grad(weight).noalias() += x.transpose() * dy;
    store.grad(bias) += dy.colwise().sum();
    return dy * store.value(weight).transpose();
  }

  void init(ParameterStore<Scalar>& store, Rng& rng, Scalar gain = Scalar(1)) const {
    // Uniform in +-sqrt(3 / fan_in): unit-variance outputs for unit inputs.
    const Scalar bound = gain * std::sqrt(Scalar(3) / static_cast<Scalar>(in));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto& w = store.value(weight);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = bound * static_cast<Scalar>(u(rng));
    store.value(bias).setZero();
  }
};

// ---------------------------------------------------------------------------
// Layer norm over the feature dimension of each row.

template <typename Scalar>
struct LayerNormCache {
  Mat<Scalar> normalized;  // (x - mean) / std
  Vec<Scalar> inv_std;
};

template <typename Scalar>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  std::size_t gain = 0;
  std::size_t bias = 0;

  static LayerNorm create(ParameterStore<Scalar>& store, const std::string& name,
                          Eigen::Index width, int depth) {
    LayerNorm ln;
    ln.gain = store.add(name + ".gain", 1, width, DecayGroup::NoDecay, depth);
    ln.bias = store.add(name + ".bias", 1, width, DecayGroup::NoDecay, depth);
    store.value(ln.gain).setOnes();
    return ln;
  }

  Mat<Scalar> forward(const ParameterStore<Scalar>& store, const Mat<Scalar>& x,
                      LayerNormCache<Scalar>* cache) const {
    const Eigen::Index d = x.cols();
    const Vec<Scalar> mean = x.rowwise().mean();
    Mat<Scalar> centered = x.colwise() - mean;
    const Vec<Scalar> var = centered.array().square().rowwise().sum() / static_cast<Scalar>(d);
    const Vec<Scalar> inv_std = (var.array() + static_cast<Scalar>(kEps)).rsqrt();
    Mat<Scalar> normalized = centered.array().colwise() * inv_std.array();
    Mat<Scalar> y = normalized.array().rowwise() * store.value(gain).row(0).array();
    y.rowwise() += store.value(bias).row(0);
    if (cache) {
      cache->normalized = std::move(normalized);
      cache->inv_std = inv_std;
    }
    return y;
  }

  Mat<Scalar> backward(ParameterStore<Scalar>& store, const LayerNormCache<Scalar>& cache,
                       const Mat<Scalar>& dy) const {
    const auto& xhat = cache.normalized;
    store.grad(gain) += (dy.array() * xhat.array()).colwise().sum().matrix();
    store.grad(bias) += dy.colwise().sum();
    const Mat<Scalar> dxhat = dy.array().rowwise() * store.value(gain).row(0).array();
    const Scalar inv_d = Scalar(1) / static_cast<Scalar>(dy.cols());
    const Vec<Scalar> mean_dxhat = dxhat.rowwise().sum() * inv_d;
    const Vec<Scalar> mean_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum().matrix() * inv_d;
    Mat<Scalar> dx = dxhat;
    dx.colwise() -= mean_dxhat;
    dx.array() -= xhat.array().colwise() * mean_dxhat_xhat.array();
    dx.array().colwise() *= cache.inv_std.array();
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Exact (erf) GELU.

template <typename Scalar>
Mat<Scalar> gelu(const Mat<Scalar>& x) {
  return x.unaryExpr([](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::erf(v * Scalar(std::numbers::sqrt2 / 2)));
  });
}

template <typename Scalar>
Mat<Scalar> gelu_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
  const Scalar inv_sqrt_2pi = Scalar(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return dy.binaryExpr(x, [inv_sqrt_2pi](Scalar g, Scalar v) {
    const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(std::numbers::sqrt2 / 2)));
    const Scalar pdf = inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v);
    return g * (cdf + v * pdf);
  });
}

// ---------------------------------------------------------------------------
// Two-hidden-layer MLP: in -> hidden -> hidden -> out, GELU between layers.

template <typename Scalar>
struct MlpCache {
  Mat<Scalar> input;
  Mat<Scalar> pre1, act1, pre2, act2;
};

template <typename Scalar>
struct Mlp {
  Linear<Scalar> fc1, fc2, fc3;

  static Mlp create(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index in,
                    Eigen::Index hidden, Eigen::Index out, int depth) {
    Mlp m;
    m.fc1 = Linear<Scalar>::create(store, name + ".fc1", in, hidden, depth);
    m.fc2 = Linear<Scalar>::create(store, name + ".fc2", hidden, hidden, depth);
    m.fc3 = Linear<Scalar>::create(store, name + ".fc3", hidden, out, depth);
    return m;
  }

  void init(ParameterStore<Scalar>& store, Rng& rng) const {
    fc1.init(store, rng);
    fc2.init(store, rng);
    fc3.init(store, rng);
  }

  Mat<Scalar> forward(const ParameterStore<Scalar>& store, const Mat<Scalar>& x,
                      MlpCache<Scalar>* cache) const {
    Mat<Scalar> pre1 = fc1.forward(store, x);
    Mat<Scalar> act1 = gelu(pre1);
    Mat<Scalar> pre2 = fc2.forward(store, act1);
    Mat<Scalar> act2 = gelu(pre2);
    Mat<Scalar> y = fc3.forward(store, act2);
    if (cache) {
      cache->input = x;
      cache->pre1 = std::move(pre1);
      cache->act1 = std::move(act1);
      cache->pre2 = std::move(pre2);
      cache->act2 = std::move(act2);
    }
    return y;
  }

  Mat<Scalar> backward(ParameterStore<Scalar>& store, const MlpCache<Scalar>& c,
                       const Mat<Scalar>& dy) const {
    Mat<Scalar> d = fc3.backward(store, c.act2, dy);
    d = gelu_backward(c.pre2, d);
    d = fc2.backward(store, c.act1, d);
    d = gelu_backward(c.pre1, d);
    return fc1.backward(store, c.input, d);
  }
};

}  // namespace lart::nn

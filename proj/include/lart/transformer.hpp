#pragma once

#include "lart/nn.hpp"
#include "lart/tokenizer.hpp"

#include <optional>

namespace lart {

enum class NormPosition { Pre, Post };

std::string_view to_string(NormPosition n);
NormPosition norm_position_from_string(std::string_view s);

struct ModelConfig {
  int layers = 16;
  int heads = 16;
  int d_model = 512;
  int mlp_ratio = 4;
  double dropout = 0.1;
  double drop_path = 0.1;
  int num_classes = 12;
  NormPosition norm = NormPosition::Pre;

  static ModelConfig tiny(int num_classes = 12) {
    ModelConfig c;
    c.layers = 4;
    c.heads = 4;
    c.d_model = 64;
    c.num_classes = num_classes;
    return c;
  }

  void validate() const {
    if (layers < 1) throw ConfigError("layers must be at least 1");
    if (heads < 1 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be at least 1");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0,1)");
    if (drop_path < 0 || drop_path >= 1) throw ConfigError("drop_path must lie in [0,1)");
    if (num_classes < 1) throw ConfigError("num_classes must be at least 1");
  }

  bool operator==(const ModelConfig&) const = default;
  // Same parameter shapes (regularization may differ).
  bool same_architecture(const ModelConfig& o) const {
    return layers == o.layers && heads == o.heads && d_model == o.d_model && mlp_ratio == o.mlp_ratio &&
           num_classes == o.num_classes && norm == o.norm;
  }
};

enum class Mode { Train, Eval };

// Additive attention bias standing in for -infinity.
inline constexpr double kMaskBias = -1e9;

template <typename Scalar>
struct BceResult {
  Scalar loss = 0;
  Mat<Scalar> grad;  // dLoss/dLogits
  int count = 0;     // supervised (position, class) pairs
};

/// Mean binary cross-entropy over supervised rows and all classes, in the
/// stable form max(z,0) - z*y + log(1 + exp(-|z|)). Rows whose loss_mask entry
/// is false contribute nothing. loss_mask is N x T_w with row q = slot*T_w + t.
template <typename Scalar>
BceResult<Scalar> bce_loss(const Mat<Scalar>& logits, const Mat<Scalar>& labels, const BoolMat& loss_mask) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols() ||
      logits.rows() != loss_mask.size())
    throw ConfigError("bce_loss: shape mismatch");
  const Eigen::Index window = loss_mask.cols();
  int rows = 0;
  for (Eigen::Index q = 0; q < logits.rows(); ++q)
    if (loss_mask(q / window, q % window)) ++rows;
  if (rows == 0) throw DataError("bce_loss: loss mask selects no positions");
  BceResult<Scalar> r;
  r.count = rows * static_cast<int>(logits.cols());
  r.grad = Mat<Scalar>::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / r.count;
  double total = 0;
  for (Eigen::Index q = 0; q < logits.rows(); ++q) {
    if (!loss_mask(q / window, q % window)) continue;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const double z = logits(q, k);
      const double y = labels(q, k);
      total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
      const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      r.grad(q, k) = static_cast<Scalar>((sig - y) * inv);
    }
  }
  r.loss = static_cast<Scalar>(total * inv);
  return r;
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return z >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-z)) : std::exp(z) / (Scalar(1) + std::exp(z));
}

/// Transformer encoder over tokens with masked multi-head self-attention, a
/// per-token linear head, and reverse-mode gradients for every parameter.
template <typename Scalar>
class LartModel {
 public:
  struct Block {
    nn::LayerNorm<Scalar> ln1, ln2;
    nn::Linear<Scalar> qkv, proj, fc1, fc2;
  };

  struct LayerCache {
    Mat<Scalar> input;
    nn::LayerNormCache<Scalar> ln1, ln2;
    Mat<Scalar> attn_in;  // input to the qkv projection
    Mat<Scalar> qkv;
    std::vector<Mat<Scalar>> probs;
    Mat<Scalar> attn_out;  // concatenated heads
    Mat<Scalar> drop1;     // dropout keep-mask, scaled; empty when off
    Scalar path1 = 1;      // drop-path multiplier
    Mat<Scalar> mid;       // residual stream after the attention branch
    Mat<Scalar> mlp_in;
    Mat<Scalar> hidden_pre, hidden;
    Mat<Scalar> drop2;
    Scalar path2 = 1;
  };

  struct ForwardCache {
    bool valid = false;
    typename TokenProjector<Scalar>::Cache projector;
    bool from_grid = false;
    BoolMat attention_mask;
    std::vector<LayerCache> layers;
    nn::LayerNormCache<Scalar> final_ln;
    Mat<Scalar> head_in;
  };

  LartModel(const ModelConfig& mcfg, const TokenConfig& tcfg) : mcfg_(mcfg), tcfg_(tcfg) {
    mcfg_.validate();
    tcfg_.validate();
    if (mcfg_.d_model != tcfg_.d_model) throw ConfigError("model and token widths differ");
    projector_ = TokenProjector<Scalar>::create(store_, tcfg_);
    const int d = mcfg_.d_model;
    const int f = mcfg_.mlp_ratio * d;
    for (int l = 0; l < mcfg_.layers; ++l) {
      const std::string p = "block" + std::to_string(l);
      const int depth = l + 1;
      Block b;
      b.ln1 = nn::LayerNorm<Scalar>::create(store_, p + ".ln1", d, depth);
      b.qkv = nn::Linear<Scalar>::create(store_, p + ".attn.qkv", d, 3 * d, depth);
      b.proj = nn::Linear<Scalar>::create(store_, p + ".attn.proj", d, d, depth);
      b.ln2 = nn::LayerNorm<Scalar>::create(store_, p + ".ln2", d, depth);
      b.fc1 = nn::Linear<Scalar>::create(store_, p + ".mlp.fc1", d, f, depth);
      b.fc2 = nn::Linear<Scalar>::create(store_, p + ".mlp.fc2", f, d, depth);
      blocks_.push_back(b);
    }
    if (mcfg_.norm == NormPosition::Pre)
      final_ln_ = nn::LayerNorm<Scalar>::create(store_, "final_ln", d, mcfg_.layers + 1);
    head_ = nn::Linear<Scalar>::create(store_, "head", d, mcfg_.num_classes, mcfg_.layers + 1);
  }

  const ModelConfig& model_config() const { return mcfg_; }
  void set_regularization(double dropout, double drop_path) {
    ModelConfig c = mcfg_;
    c.dropout = dropout;
    c.drop_path = drop_path;
    c.validate();
    mcfg_ = c;
  }
  const TokenConfig& token_config() const { return tcfg_; }
  nn::ParameterStore<Scalar>& parameters() { return store_; }
  const nn::ParameterStore<Scalar>& parameters() const { return store_; }
  const TokenProjector<Scalar>& projector() const { return projector_; }
  RowVec<Scalar> mask_token() const { return store_.value(projector_.mask_token).row(0); }

  void init(std::uint64_t seed) {
    Rng rng = substream(seed, "model-init");
    projector_.init(store_, rng);
    const Scalar residual_gain = Scalar(1) / std::sqrt(Scalar(2 * mcfg_.layers));
    for (const auto& b : blocks_) {
      b.qkv.init(store_, rng);
      b.proj.init(store_, rng, residual_gain);
      b.fc1.init(store_, rng);
      b.fc2.init(store_, rng, residual_gain);
    }
    head_.init(store_, rng, Scalar(0.1));
  }

  /// Tokens for `g` under the current projection parameters.
  Mat<Scalar> embed(const TokenGrid<Scalar>& g) const {
    return projector_.embed_tokens(store_, g, nullptr);
  }

  /// Logits (N*T_w) x K. Tokens are recomputed from the grid features so the
  /// projections receive gradients.
  Mat<Scalar> forward(const TokenGrid<Scalar>& g, Mode mode, Rng* rng, ForwardCache* cache) const {
    check_grid(g);
    const Mat<Scalar> tokens = projector_.embed_tokens(store_, g, cache ? &cache->projector : nullptr);
    Mat<Scalar> logits = encode(tokens, g.attention_mask, mode, rng, cache);
    if (cache) cache->from_grid = true;
    return logits;
  }

  /// Logits from given token contents, bypassing the projections.
  Mat<Scalar> forward_tokens(const Mat<Scalar>& tokens, const BoolMat& attention_mask, Mode mode, Rng* rng,
                             ForwardCache* cache) const {
    Mat<Scalar> logits = encode(tokens, attention_mask, mode, rng, cache);
    if (cache) cache->from_grid = false;
    return logits;
  }

  /// Accumulates dLoss/dTheta into the store's gradient buffers. Returns
  /// dLoss/dTokens.
  Mat<Scalar> backward(const ForwardCache& cache, const Mat<Scalar>& d_logits) {
    if (!cache.valid) throw Error("backward called without cached activations from a training forward");
    Mat<Scalar> d = head_.backward(store_, cache.head_in, d_logits);
    if (mcfg_.norm == NormPosition::Pre) d = final_ln_.backward(store_, cache.final_ln, d);
    for (int l = mcfg_.layers - 1; l >= 0; --l)
      d = block_backward(blocks_[static_cast<std::size_t>(l)], cache.layers[static_cast<std::size_t>(l)],
                         cache.attention_mask, d);
    if (cache.from_grid) projector_.backward(store_, cache.projector, d);
    return d;
  }

 private:
  void check_grid(const TokenGrid<Scalar>& g) const {
    if (g.d_model != mcfg_.d_model || g.n_tracks < 1 || g.window < 1)
      throw ConfigError("grid does not match model width");
    if (g.num_classes != mcfg_.num_classes) throw ConfigError("grid class count does not match model");
    if (static_cast<int>(g.kinds.size()) != g.size() || g.attention_mask.rows() != g.size())
      throw ConfigError("grid is not well formed");
    if (tcfg_.uses_pose() && g.pose_features.rows() != g.size())
      throw ConfigError("grid lacks pose features");
    if (tcfg_.uses_appearance() && g.appearance_features.rows() != g.size())
      throw ConfigError("grid lacks appearance features");
  }

  Mat<Scalar> encode(const Mat<Scalar>& tokens, const BoolMat& attention_mask, Mode mode, Rng* rng,
                     ForwardCache* cache) const {
    if (tokens.cols() != mcfg_.d_model || attention_mask.rows() != tokens.rows() ||
        attention_mask.cols() != tokens.rows())
      throw ConfigError("token matrix does not match model width or mask size");
    if (mode == Mode::Train && (mcfg_.dropout > 0 || mcfg_.drop_path > 0) && !rng)
      throw ConfigError("training forward with dropout needs a random stream");
    Mat<Scalar> bias = attention_mask.unaryExpr([](bool ok) { return ok ? Scalar(0) : Scalar(kMaskBias); });
    if (cache) {
      cache->layers.assign(static_cast<std::size_t>(mcfg_.layers), LayerCache{});
      cache->attention_mask = attention_mask;
    }
    Mat<Scalar> x = tokens;
    for (int l = 0; l < mcfg_.layers; ++l) {
      LayerCache* lc = cache ? &cache->layers[static_cast<std::size_t>(l)] : nullptr;
      x = block_forward(blocks_[static_cast<std::size_t>(l)], x, bias, mode, rng, lc);
      if (!x.allFinite()) throw NumericError("non-finite activations after layer " + std::to_string(l));
    }
    Mat<Scalar> head_in = mcfg_.norm == NormPosition::Pre
                              ? final_ln_.forward(store_, x, cache ? &cache->final_ln : nullptr)
                              : x;
    Mat<Scalar> logits = head_.forward(store_, head_in);
    if (!logits.allFinite()) throw NumericError("non-finite logits");
    if (cache) {
      cache->head_in = std::move(head_in);
      cache->valid = true;
    }
    return logits;
  }

  // Dropout keep-mask scaled by 1/(1-p); empty when inactive.
  Mat<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, Mode mode, Rng* rng) const {
    if (mode != Mode::Train || mcfg_.dropout <= 0) return {};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Scalar keep = Scalar(1) / Scalar(1 - mcfg_.dropout);
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(*rng) < mcfg_.dropout ? Scalar(0) : keep;
    return m;
  }

  Scalar drop_path_scale(Mode mode, Rng* rng) const {
    if (mode != Mode::Train || mcfg_.drop_path <= 0) return Scalar(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(*rng) < mcfg_.drop_path ? Scalar(0) : Scalar(1) / Scalar(1 - mcfg_.drop_path);
  }

  Mat<Scalar> attention(const Block& b, const Mat<Scalar>& in, const Mat<Scalar>& bias, LayerCache* lc) const {
    const int d = mcfg_.d_model;
    const int h = mcfg_.heads;
    const int dh = d / h;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    Mat<Scalar> qkv = b.qkv.forward(store_, in);
    Mat<Scalar> out(in.rows(), d);
    if (lc) lc->probs.resize(static_cast<std::size_t>(h));
    for (int head = 0; head < h; ++head) {
      const auto q = qkv.middleCols(head * dh, dh);
      const auto k = qkv.middleCols(d + head * dh, dh);
      const auto v = qkv.middleCols(2 * d + head * dh, dh);
      Mat<Scalar> scores = (q * k.transpose()) * scale + bias;
      const Vec<Scalar> row_max = scores.rowwise().maxCoeff();
      scores.colwise() -= row_max;
      // Vectorized exp clamps large negative inputs to a tiny positive value,
      // so disallowed keys are zeroed explicitly to keep isolation exact.
      scores = (bias.array() == Scalar(0)).select(scores.array().exp(), Scalar(0));
      const Vec<Scalar> denom = scores.rowwise().sum();
      scores.array().colwise() /= denom.array();
      out.middleCols(head * dh, dh).noalias() = scores * v;
      if (lc) lc->probs[static_cast<std::size_t>(head)] = std::move(scores);
    }
    if (lc) {
      lc->attn_in = in;
      lc->qkv = std::move(qkv);
      lc->attn_out = out;
    }
    return b.proj.forward(store_, out);
  }

  Mat<Scalar> attention_backward(const Block& b, const LayerCache& lc, const Mat<Scalar>& d_out) {
    const int d = mcfg_.d_model;
    const int h = mcfg_.heads;
    const int dh = d / h;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const Mat<Scalar> d_concat = b.proj.backward(store_, lc.attn_out, d_out);
    Mat<Scalar> d_qkv(lc.qkv.rows(), 3 * d);
    for (int head = 0; head < h; ++head) {
      const auto q = lc.qkv.middleCols(head * dh, dh);
      const auto k = lc.qkv.middleCols(d + head * dh, dh);
      const auto v = lc.qkv.middleCols(2 * d + head * dh, dh);
      const Mat<Scalar>& p = lc.probs[static_cast<std::size_t>(head)];
      const auto d_o = d_concat.middleCols(head * dh, dh);
      const Mat<Scalar> d_p = d_o * v.transpose();
      d_qkv.middleCols(2 * d + head * dh, dh).noalias() = p.transpose() * d_o;
      const Vec<Scalar> row_dot = (d_p.array() * p.array()).rowwise().sum();
      Mat<Scalar> d_s = p.array() * (d_p.colwise() - row_dot).array();
      d_s *= scale;
      d_qkv.middleCols(head * dh, dh).noalias() = d_s * k;
      d_qkv.middleCols(d + head * dh, dh).noalias() = d_s.transpose() * q;
    }
    return b.qkv.backward(store_, lc.attn_in, d_qkv);
  }

  Mat<Scalar> mlp(const Block& b, const Mat<Scalar>& in, LayerCache* lc) const {
    Mat<Scalar> pre = b.fc1.forward(store_, in);
    Mat<Scalar> act = nn::gelu(pre);
    Mat<Scalar> y = b.fc2.forward(store_, act);
    if (lc) {
      lc->mlp_in = in;
      lc->hidden_pre = std::move(pre);
      lc->hidden = std::move(act);
    }
    return y;
  }

  Mat<Scalar> mlp_backward(const Block& b, const LayerCache& lc, const Mat<Scalar>& dy) {
    Mat<Scalar> dh = b.fc2.backward(store_, lc.hidden, dy);
    dh = nn::gelu_backward(lc.hidden_pre, dh);
    return b.fc1.backward(store_, lc.mlp_in, dh);
  }

  static Mat<Scalar> apply_drop(Mat<Scalar> y, const Mat<Scalar>& mask, Scalar path) {
    if (mask.size() > 0) y.array() *= mask.array();
    if (path != Scalar(1)) y *= path;
    return y;
  }

  Mat<Scalar> block_forward(const Block& b, const Mat<Scalar>& x, const Mat<Scalar>& bias, Mode mode, Rng* rng,
                            LayerCache* lc) const {
    const Eigen::Index s = x.rows();
    const int d = mcfg_.d_model;
    Mat<Scalar> drop1 = dropout_mask(s, d, mode, rng);
    const Scalar path1 = drop_path_scale(mode, rng);
    Mat<Scalar> drop2 = dropout_mask(s, d, mode, rng);
    const Scalar path2 = drop_path_scale(mode, rng);
    if (lc) lc->input = x;

    Mat<Scalar> out;
    if (mcfg_.norm == NormPosition::Pre) {
      const Mat<Scalar> a = b.ln1.forward(store_, x, lc ? &lc->ln1 : nullptr);
      Mat<Scalar> mid = x + apply_drop(attention(b, a, bias, lc), drop1, path1);
      const Mat<Scalar> m = b.ln2.forward(store_, mid, lc ? &lc->ln2 : nullptr);
      out = mid + apply_drop(mlp(b, m, lc), drop2, path2);
      if (lc) lc->mid = std::move(mid);
    } else {
      const Mat<Scalar> u1 = x + apply_drop(attention(b, x, bias, lc), drop1, path1);
      Mat<Scalar> mid = b.ln1.forward(store_, u1, lc ? &lc->ln1 : nullptr);
      const Mat<Scalar> u2 = mid + apply_drop(mlp(b, mid, lc), drop2, path2);
      out = b.ln2.forward(store_, u2, lc ? &lc->ln2 : nullptr);
      if (lc) lc->mid = std::move(mid);
    }
    if (lc) {
      lc->drop1 = std::move(drop1);
      lc->drop2 = std::move(drop2);
      lc->path1 = path1;
      lc->path2 = path2;
    }
    return out;
  }

  Mat<Scalar> block_backward(const Block& b, const LayerCache& lc, const BoolMat&, const Mat<Scalar>& d_out) {
    if (mcfg_.norm == NormPosition::Pre) {
      Mat<Scalar> d_mid = d_out;
      const Mat<Scalar> d_mlp_in = mlp_backward(b, lc, apply_drop(d_out, lc.drop2, lc.path2));
      d_mid += b.ln2.backward(store_, lc.ln2, d_mlp_in);
      Mat<Scalar> d_x = d_mid;
      const Mat<Scalar> d_attn_in = attention_backward(b, lc, apply_drop(d_mid, lc.drop1, lc.path1));
      d_x += b.ln1.backward(store_, lc.ln1, d_attn_in);
      return d_x;
    }
    const Mat<Scalar> d_u2 = b.ln2.backward(store_, lc.ln2, d_out);
    Mat<Scalar> d_mid = d_u2;
    d_mid += mlp_backward(b, lc, apply_drop(d_u2, lc.drop2, lc.path2));
    const Mat<Scalar> d_u1 = b.ln1.backward(store_, lc.ln1, d_mid);
    Mat<Scalar> d_x = d_u1;
    d_x += attention_backward(b, lc, apply_drop(d_u1, lc.drop1, lc.path1));
    return d_x;
  }

  ModelConfig mcfg_;
  TokenConfig tcfg_;
  nn::ParameterStore<Scalar> store_;
  TokenProjector<Scalar> projector_;
  std::vector<Block> blocks_;
  nn::LayerNorm<Scalar> final_ln_;
  nn::Linear<Scalar> head_;
};

}  // namespace lart

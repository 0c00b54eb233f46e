#pragma once

#include "lart/nn.hpp"
#include "lart/tracklet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>

namespace lart {

enum class TokenMode { PoseOnly, AppearanceOnly, Fused };

std::string_view to_string(TokenMode m);
TokenMode token_mode_from_string(std::string_view s);

struct TokenConfig {
  int d_model = 256;
  int n_tracks = 5;
  int window = 128;
  TokenMode mode = TokenMode::PoseOnly;
  int pose_embed = 256;
  int appearance_embed = 0;
  int hidden = 0;  // projection MLP hidden width; 0 = same as its output width
  double mask_ratio = 0.0;

  static TokenConfig pose_only(int d_model) {
    TokenConfig c;
    c.d_model = d_model;
    c.pose_embed = d_model;
    c.appearance_embed = 0;
    c.mode = TokenMode::PoseOnly;
    return c;
  }
  static TokenConfig fused(int pose_embed, int appearance_embed) {
    TokenConfig c;
    c.d_model = pose_embed + appearance_embed;
    c.pose_embed = pose_embed;
    c.appearance_embed = appearance_embed;
    c.mode = TokenMode::Fused;
    return c;
  }
  static TokenConfig appearance_only(int d_model) {
    TokenConfig c;
    c.d_model = d_model;
    c.pose_embed = 0;
    c.appearance_embed = d_model;
    c.mode = TokenMode::AppearanceOnly;
    return c;
  }

  bool uses_pose() const { return mode != TokenMode::AppearanceOnly; }
  bool uses_appearance() const { return mode != TokenMode::PoseOnly; }
  int tokens() const { return n_tracks * window; }

  void validate() const {
    if (d_model <= 0 || d_model % 4 != 0) throw ConfigError("d_model must be a positive multiple of 4");
    if (n_tracks < 1) throw ConfigError("n_tracks must be at least 1");
    if (window < 1) throw ConfigError("window must be at least 1");
    if (mask_ratio < 0 || mask_ratio > 1) throw ConfigError("mask_ratio must lie in [0,1]");
    if (hidden < 0) throw ConfigError("hidden width must be non-negative");
    switch (mode) {
      case TokenMode::PoseOnly:
        if (pose_embed != d_model || appearance_embed != 0)
          throw ConfigError("pose-only tokens need pose_embed == d_model");
        break;
      case TokenMode::AppearanceOnly:
        if (appearance_embed != d_model || pose_embed != 0)
          throw ConfigError("appearance-only tokens need appearance_embed == d_model");
        break;
      case TokenMode::Fused:
        if (pose_embed <= 0 || appearance_embed <= 0 || pose_embed + appearance_embed != d_model)
          throw ConfigError("fused tokens need pose_embed + appearance_embed == d_model");
        break;
    }
  }

  bool operator==(const TokenConfig&) const = default;
};

/// 2D sine/cosine encoding of (time, track slot). The first half of the vector
/// holds sin/cos pairs of t, the second half pairs of i, with frequencies
/// 10000^(-4r/D) for r in [0, D/4).
template <typename Scalar = double>
Vec<Scalar> positional_encoding(int t, int i, int d) {
  if (d <= 0 || d % 4 != 0) throw ConfigError("positional encoding width must be a multiple of 4");
  if (t < 0 || i < 0) throw ConfigError("positional encoding indices must be non-negative");
  Vec<Scalar> pe(d);
  const int half = d / 2;
  for (int r = 0; r < d / 4; ++r) {
    const double freq = std::pow(10000.0, -4.0 * r / d);
    pe[2 * r] = static_cast<Scalar>(std::sin(t * freq));
    pe[2 * r + 1] = static_cast<Scalar>(std::cos(t * freq));
    pe[half + 2 * r] = static_cast<Scalar>(std::sin(i * freq));
    pe[half + 2 * r + 1] = static_cast<Scalar>(std::cos(i * freq));
  }
  return pe;
}

enum class TokenKind : std::uint8_t {
  Present,   // detection available
  Gap,       // track exists but has no detection here
  Masked,    // detection replaced by the mask token (training)
  Infilled,  // gap filled with the mask token (inference)
  Padding,   // no track in this slot, or outside the track's lifetime
};

/// True where query `q` may attend key `k`. Gap and padding tokens only see
/// themselves; mask-token positions see present tokens but nobody sees them.
inline bool may_attend(TokenKind q, TokenKind k, bool self) {
  if (self) return true;
  if (k != TokenKind::Present) return false;
  return q == TokenKind::Present || q == TokenKind::Masked || q == TokenKind::Infilled;
}

template <typename Scalar>
struct TokenGrid {
  int n_tracks = 0;
  int window = 0;
  int d_model = 0;
  int num_classes = 0;
  int window_start = 0;             // clip frame of column t = 0
  static constexpr int poi_slot = 0;
  std::vector<int> track_ids;       // per slot; -1 for padded rows

  Mat<Scalar> tokens;               // (N*T_w) x D, row = slot * T_w + t
  std::vector<TokenKind> kinds;
  BoolMat attention_mask;           // (N*T_w) x (N*T_w), true = may attend
  BoolMat loss_mask;                // N x T_w
  Mat<Scalar> labels;               // (N*T_w) x K
  std::vector<std::uint8_t> has_label;

  Mat<Scalar> pose_features;        // (N*T_w) x 229, zero where absent
  Mat<Scalar> appearance_features;  // (N*T_w) x 1152 when appearance is used

  int size() const { return n_tracks * window; }
  int index(int slot, int t) const { return slot * window + t; }
  int frame(int t) const { return window_start + t; }

  void rebuild_attention_mask() {
    const int s = size();
    attention_mask.resize(s, s);
    for (int q = 0; q < s; ++q)
      for (int k = 0; k < s; ++k)
        attention_mask(q, k) = may_attend(kinds[static_cast<std::size_t>(q)],
                                          kinds[static_cast<std::size_t>(k)], q == k);
  }
};

/// Learned token projections and the mask token. Handles index into a
/// parameter store owned by the model.
template <typename Scalar>
struct TokenProjector {
  TokenConfig config;
  nn::Mlp<Scalar> pose_mlp;
  nn::Mlp<Scalar> appearance_mlp;
  std::size_t mask_token = 0;

  struct Cache {
    std::vector<int> rows;  // present positions, in order
    std::vector<int> mask_rows;
    nn::MlpCache<Scalar> pose;
    nn::MlpCache<Scalar> appearance;
  };

  static TokenProjector create(nn::ParameterStore<Scalar>& store, const TokenConfig& cfg) {
    cfg.validate();
    TokenProjector p;
    p.config = cfg;
    if (cfg.uses_pose()) {
      const int h = cfg.hidden > 0 ? cfg.hidden : cfg.pose_embed;
      p.pose_mlp = nn::Mlp<Scalar>::create(store, "proj.pose", kPoseVectorSize, h, cfg.pose_embed, 0);
    }
    if (cfg.uses_appearance()) {
      const int h = cfg.hidden > 0 ? cfg.hidden : cfg.appearance_embed;
      p.appearance_mlp = nn::Mlp<Scalar>::create(store, "proj.appearance", kAppearanceDims, h,
                                                 cfg.appearance_embed, 0);
    }
    p.mask_token = store.add("mask_token", 1, cfg.d_model, nn::DecayGroup::NoDecay, 0);
    return p;
  }

  void init(nn::ParameterStore<Scalar>& store, Rng& rng) const {
    if (config.uses_pose()) pose_mlp.init(store, rng);
    if (config.uses_appearance()) appearance_mlp.init(store, rng);
    std::normal_distribution<double> n(0.0, 0.02);
    auto& m = store.value(mask_token);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
  }

  /// Pose projection of a batch of 229-vectors (one per row).
  Mat<Scalar> project_pose(const nn::ParameterStore<Scalar>& store, const Mat<Scalar>& x,
                           nn::MlpCache<Scalar>* cache = nullptr) const {
    return pose_mlp.forward(store, x, cache);
  }

  Mat<Scalar> project_appearance(const nn::ParameterStore<Scalar>& store, const Mat<Scalar>& u,
                                 nn::MlpCache<Scalar>* cache = nullptr) const {
    return appearance_mlp.forward(store, u, cache);
  }

  /// Token matrix for `g`: projection + PE where present, mask token + PE at
  /// masked/infilled positions, zeros elsewhere.
  Mat<Scalar> embed_tokens(const nn::ParameterStore<Scalar>& store, const TokenGrid<Scalar>& g,
                           Cache* cache) const {
    const int s = g.size();
    std::vector<int> rows, mask_rows;
    for (int q = 0; q < s; ++q) {
      const auto k = g.kinds[static_cast<std::size_t>(q)];
      if (k == TokenKind::Present) rows.push_back(q);
      if (k == TokenKind::Masked || k == TokenKind::Infilled) mask_rows.push_back(q);
    }
    Mat<Scalar> tokens = Mat<Scalar>::Zero(s, g.d_model);
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    if (n > 0) {
      int col = 0;
      if (config.uses_pose()) {
        Mat<Scalar> x(n, kPoseVectorSize);
        for (Eigen::Index r = 0; r < n; ++r) x.row(r) = g.pose_features.row(rows[r]);
        const Mat<Scalar> y = pose_mlp.forward(store, x, cache ? &cache->pose : nullptr);
        for (Eigen::Index r = 0; r < n; ++r) tokens.row(rows[r]).segment(col, y.cols()) = y.row(r);
        col += static_cast<int>(y.cols());
      }
      if (config.uses_appearance()) {
        Mat<Scalar> x(n, kAppearanceDims);
        for (Eigen::Index r = 0; r < n; ++r) x.row(r) = g.appearance_features.row(rows[r]);
        const Mat<Scalar> y = appearance_mlp.forward(store, x, cache ? &cache->appearance : nullptr);
        for (Eigen::Index r = 0; r < n; ++r) tokens.row(rows[r]).segment(col, y.cols()) = y.row(r);
      }
    }
    for (int q : mask_rows) tokens.row(q) = store.value(mask_token).row(0);
    for (int q : rows) tokens.row(q) += pe_row(g, q);
    for (int q : mask_rows) tokens.row(q) += pe_row(g, q);
    if (cache) {
      cache->rows = std::move(rows);
      cache->mask_rows = std::move(mask_rows);
    }
    return tokens;
  }

  void embed(const nn::ParameterStore<Scalar>& store, TokenGrid<Scalar>& g) const {
    g.tokens = embed_tokens(store, g, nullptr);
  }

  void backward(nn::ParameterStore<Scalar>& store, const Cache& cache,
                const Mat<Scalar>& d_tokens) const {
    const Eigen::Index n = static_cast<Eigen::Index>(cache.rows.size());
    if (n > 0) {
      int col = 0;
      if (config.uses_pose()) {
        Mat<Scalar> dy(n, config.pose_embed);
        for (Eigen::Index r = 0; r < n; ++r) dy.row(r) = d_tokens.row(cache.rows[r]).segment(col, config.pose_embed);
        pose_mlp.backward(store, cache.pose, dy);
        col += config.pose_embed;
      }
      if (config.uses_appearance()) {
        Mat<Scalar> dy(n, config.appearance_embed);
        for (Eigen::Index r = 0; r < n; ++r)
          dy.row(r) = d_tokens.row(cache.rows[r]).segment(col, config.appearance_embed);
        appearance_mlp.backward(store, cache.appearance, dy);
      }
    }
    for (int q : cache.mask_rows) store.grad(mask_token).row(0) += d_tokens.row(q);
  }

  static RowVec<Scalar> pe_row(const TokenGrid<Scalar>& g, int q) {
    return positional_encoding<Scalar>(q % g.window, q / g.window, g.d_model).transpose();
  }
};

/// Lays out the person of interest (slot 0) and supporting tracks over the
/// frames [window_start, window_start + cfg.window). Slots without a track are
/// padding. Tokens are left empty; TokenProjector::embed fills them.
template <typename Scalar>
TokenGrid<Scalar> assemble_grid(const Clip& c, int poi_track, std::span<const int> supporting,
                                const TokenConfig& cfg, int window_start) {
  cfg.validate();
  if (!c.find_track(poi_track)) throw DataError("person of interest " + std::to_string(poi_track) + " not in clip");
  if (static_cast<int>(supporting.size()) > cfg.n_tracks - 1)
    throw ConfigError("more supporting tracks than grid rows");
  std::set<int> seen{poi_track};
  for (int id : supporting) {
    if (!c.find_track(id)) throw DataError("supporting track " + std::to_string(id) + " not in clip");
    if (!seen.insert(id).second) throw DataError("duplicate track id " + std::to_string(id) + " in grid");
  }
  if (cfg.uses_appearance() && !c.has_appearance())
    throw DataError("token mode needs appearance features but the clip has none");

  TokenGrid<Scalar> g;
  g.n_tracks = cfg.n_tracks;
  g.window = cfg.window;
  g.d_model = cfg.d_model;
  g.num_classes = c.num_classes();
  g.window_start = window_start;
  g.track_ids.assign(static_cast<std::size_t>(cfg.n_tracks), -1);
  g.track_ids[0] = poi_track;
  for (std::size_t k = 0; k < supporting.size(); ++k) g.track_ids[k + 1] = supporting[k];

  const int s = g.size();
  g.kinds.assign(static_cast<std::size_t>(s), TokenKind::Padding);
  g.loss_mask = BoolMat::Constant(cfg.n_tracks, cfg.window, false);
  g.labels = Mat<Scalar>::Zero(s, g.num_classes);
  g.has_label.assign(static_cast<std::size_t>(s), 0);
  g.pose_features = Mat<Scalar>::Zero(s, kPoseVectorSize);
  if (cfg.uses_appearance()) g.appearance_features = Mat<Scalar>::Zero(s, kAppearanceDims);

  for (int slot = 0; slot < cfg.n_tracks; ++slot) {
    const int id = g.track_ids[static_cast<std::size_t>(slot)];
    if (id < 0) continue;
    const Tracklet& tr = *c.find_track(id);
    for (int t = 0; t < cfg.window; ++t) {
      const int frame = window_start + t;
      const int q = g.index(slot, t);
      if (!tr.covers(frame)) continue;
      const Detection* d = tr.at(frame);
      if (!d) {
        g.kinds[static_cast<std::size_t>(q)] = TokenKind::Gap;
        continue;
      }
      g.kinds[static_cast<std::size_t>(q)] = TokenKind::Present;
      g.pose_features.row(q) = flatten_person_pose(d->person.pose).template cast<Scalar>().transpose();
      if (cfg.uses_appearance()) {
        if (!d->person.appearance) throw DataError("detection lacks an appearance feature");
        g.appearance_features.row(q) = d->person.appearance->u.template cast<Scalar>().transpose();
      }
      if (const LabelEntry* l = c.label(id, frame); l && l->evaluable) {
        for (int k = 0; k < g.num_classes; ++k) g.labels(q, k) = l->classes[static_cast<std::size_t>(k)];
        g.has_label[static_cast<std::size_t>(q)] = 1;
        g.loss_mask(slot, t) = true;
      }
    }
  }
  g.rebuild_attention_mask();
  return g;
}

/// Same as above, then embeds tokens with `projector`.
template <typename Scalar>
TokenGrid<Scalar> assemble_grid(const Clip& c, int poi_track, std::span<const int> supporting,
                                const TokenConfig& cfg, int window_start,
                                const nn::ParameterStore<Scalar>& store,
                                const TokenProjector<Scalar>& projector) {
  TokenGrid<Scalar> g = assemble_grid<Scalar>(c, poi_track, supporting, cfg, window_start);
  projector.embed(store, g);
  return g;
}

/// Replaces floor(mask_ratio * #present) present tokens, drawn uniformly
/// without replacement, by mask_token + PE. Their labels stay supervised.
template <typename Scalar>
int apply_mask_tokens(TokenGrid<Scalar>& g, double mask_ratio, const RowVec<Scalar>& mask_token, Rng& rng) {
  if (mask_ratio < 0 || mask_ratio > 1) throw ConfigError("mask_ratio must lie in [0,1]");
  std::vector<int> present;
  for (int q = 0; q < g.size(); ++q)
    if (g.kinds[static_cast<std::size_t>(q)] == TokenKind::Present) present.push_back(q);
  const int count = static_cast<int>(std::floor(mask_ratio * static_cast<double>(present.size())));
  if (count == 0) return 0;
  // Partial Fisher-Yates.
  for (int k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), present.size() - 1);
    std::swap(present[static_cast<std::size_t>(k)], present[pick(rng)]);
  }
  const bool has_tokens = g.tokens.rows() == g.size();
  for (int k = 0; k < count; ++k) {
    const int q = present[static_cast<std::size_t>(k)];
    g.kinds[static_cast<std::size_t>(q)] = TokenKind::Masked;
    if (has_tokens)
      g.tokens.row(q) = mask_token + positional_encoding<Scalar>(q % g.window, q / g.window, g.d_model).transpose();
  }
  g.rebuild_attention_mask();
  return count;
}

/// Inference-time infill: every gap becomes mask_token + PE with the
/// mask-token attention pattern. Loss stays off there.
template <typename Scalar>
int infill_gaps(TokenGrid<Scalar>& g, const RowVec<Scalar>& mask_token) {
  int count = 0;
  const bool has_tokens = g.tokens.rows() == g.size();
  for (int q = 0; q < g.size(); ++q) {
    auto& kind = g.kinds[static_cast<std::size_t>(q)];
    if (kind != TokenKind::Gap) continue;
    kind = TokenKind::Infilled;
    g.loss_mask(q / g.window, q % g.window) = false;
    if (has_tokens)
      g.tokens.row(q) = mask_token + positional_encoding<Scalar>(q % g.window, q / g.window, g.d_model).transpose();
    ++count;
  }
  if (count > 0) g.rebuild_attention_mask();
  return count;
}

}  // namespace lart

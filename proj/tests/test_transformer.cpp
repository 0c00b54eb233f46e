#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include <filesystem>
#include <fstream>

using namespace lart;
using namespace lart::testing;

namespace {

using DModel = LartModel<double>;

ModelConfig small_model(NormPosition norm = NormPosition::Pre) {
  ModelConfig m;
  m.layers = 2;
  m.heads = 2;
  m.d_model = 16;
  m.mlp_ratio = 2;
  m.dropout = 0.1;
  m.drop_path = 0.1;
  m.norm = norm;
  return m;
}

TokenConfig small_tokens(int n_tracks, int window) {
  TokenConfig t = TokenConfig::pose_only(16);
  t.n_tracks = n_tracks;
  t.window = window;
  t.hidden = 8;
  return t;
}

Clip gappy_clip(std::uint64_t seed) {
  GeneratorConfig g = small_config(seed, 3, 16);
  g.gap_rate = 0.3;
  return generate_clip(g);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lart-test-" + std::to_string(::getpid()) + "-" + name);
}

}  // namespace

TEST_CASE("bce loss examples") {
  Mat<double> z(2, 2), y(2, 2);
  z << 0, 0, 100, -100;
  y << 1, 0, 1, 1;
  BoolMat all = BoolMat::Constant(1, 2, true);
  const auto r = bce_loss<double>(z, y, all);
  CHECK(r.count == 4);
  CHECK(r.loss == doctest::Approx((2 * std::log(2.0) + 0 + 100) / 4));
  CHECK(r.grad(0, 0) == doctest::Approx(-0.5 / 4));
  CHECK(r.grad(0, 1) == doctest::Approx(0.5 / 4));
  CHECK(r.grad(1, 0) == doctest::Approx(0).epsilon(1e-12));
  CHECK(r.grad(1, 1) == doctest::Approx(-1.0 / 4));

  BoolMat first = BoolMat::Constant(1, 2, false);
  first(0, 0) = true;
  const auto s = bce_loss<double>(z, y, first);
  CHECK(s.count == 2);
  CHECK(s.loss == doctest::Approx(std::log(2.0)));
  CHECK(s.grad.row(1).norm() == 0);

  CHECK_THROWS_AS(bce_loss<double>(z, y, BoolMat::Constant(1, 2, false)), DataError);
  CHECK_THROWS_AS(bce_loss<double>(z, y, BoolMat::Constant(1, 3, true)), ConfigError);
}

TEST_CASE("a zero head returns its bias everywhere") {
  const Clip c = gappy_clip(1);
  DModel m(small_model(), small_tokens(3, 8));
  m.init(1);
  RowVec<double> bias(12);
  for (int k = 0; k < 12; ++k) bias[k] = 0.1 * k - 0.5;
  for (auto& p : m.parameters().all()) {
    if (p.name == "head.weight") p.value.setZero();
    if (p.name == "head.bias") p.value = bias;
  }
  const int sup[] = {2, 3};
  const auto g = assemble_grid<double>(c, 1, sup, m.token_config(), 0);
  const Mat<double> logits = m.forward(g, Mode::Eval, nullptr, nullptr);
  for (Eigen::Index q = 0; q < logits.rows(); ++q) CHECK((logits.row(q) - bias).norm() == 0);
}

TEST_CASE("config validation") {
  ModelConfig m = small_model();
  m.heads = 3;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  CHECK_THROWS_AS(DModel(small_model(), TokenConfig::pose_only(32)), ConfigError);
  CHECK(norm_position_from_string("post") == NormPosition::Post);
  CHECK_THROWS_AS(norm_position_from_string("middle"), ConfigError);
  CHECK(token_mode_from_string(to_string(TokenMode::Fused)) == TokenMode::Fused);
}

TEST_CASE("initialization and forward are deterministic") {
  const Clip c = gappy_clip(2);
  DModel a(small_model(), small_tokens(3, 8)), b(small_model(), small_tokens(3, 8));
  a.init(7);
  b.init(7);
  const int sup[] = {2, 3};
  const auto g = assemble_grid<double>(c, 1, sup, a.token_config(), 4);
  CHECK(a.forward(g, Mode::Eval, nullptr, nullptr) == b.forward(g, Mode::Eval, nullptr, nullptr));
  Rng r1(3), r2(3);
  CHECK(a.forward(g, Mode::Train, &r1, nullptr) == b.forward(g, Mode::Train, &r2, nullptr));
  Rng r3(4);
  CHECK_FALSE(a.forward(g, Mode::Train, &r3, nullptr) == a.forward(g, Mode::Eval, nullptr, nullptr));
  CHECK_THROWS_AS(a.forward(g, Mode::Train, nullptr, nullptr), ConfigError);
  DModel other(small_model(), small_tokens(3, 8));
  other.init(8);
  CHECK_FALSE(other.forward(g, Mode::Eval, nullptr, nullptr) == a.forward(g, Mode::Eval, nullptr, nullptr));
}

TEST_CASE("attention rows are distributions over allowed keys") {
  const Clip c = gappy_clip(3);
  DModel m(small_model(), small_tokens(3, 8));
  m.init(2);
  const int sup[] = {2, 3};
  auto g = assemble_grid<double>(c, 1, sup, m.token_config(), 0);
  Rng mr(1);
  apply_mask_tokens(g, 0.25, m.mask_token(), mr);
  DModel::ForwardCache cache;
  m.forward(g, Mode::Eval, nullptr, &cache);
  for (const auto& layer : cache.layers)
    for (const auto& p : layer.probs) {
      for (Eigen::Index q = 0; q < p.rows(); ++q) {
        CHECK(p.row(q).sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (Eigen::Index k = 0; k < p.cols(); ++k)
          if (!g.attention_mask(q, k)) CHECK(p(q, k) == 0);
      }
    }
}

TEST_CASE("gradients match finite differences") {
  const Clip c = gappy_clip(4);
  for (NormPosition norm : {NormPosition::Pre, NormPosition::Post}) {
    DModel m(small_model(norm), small_tokens(3, 6));
    m.init(3);
    const int sup[] = {2, 3};
    auto g = assemble_grid<double>(c, 1, sup, m.token_config(), 2);
    Rng mr(5);
    apply_mask_tokens(g, 0.3, m.mask_token(), mr);
    auto loss = [&](bool backward) {
      Rng rng(42);
      DModel::ForwardCache cache;
      const Mat<double> logits = m.forward(g, Mode::Train, &rng, backward ? &cache : nullptr);
      const auto b = bce_loss<double>(logits, g.labels, g.loss_mask);
      if (backward) m.backward(cache, b.grad);
      return static_cast<double>(b.loss);
    };
    const GradCheck r = gradient_check(m.parameters(), loss, 8, 64, 11);
    INFO(to_string(norm), ": ", r.worst);
    CHECK(r.checked > 300);
    CHECK(r.failures == 0);
  }
}

TEST_CASE("unsupervised and isolated tokens receive no gradient") {
  const Clip c = gappy_clip(5);
  DModel m(small_model(), small_tokens(3, 16));
  m.init(4);
  m.set_regularization(0, 0);
  const int sup[] = {2};
  auto g = assemble_grid<double>(c, 1, sup, m.token_config(), 0);
  Rng mr(2);
  apply_mask_tokens(g, 0.2, m.mask_token(), mr);
  DModel::ForwardCache cache;
  const Mat<double> logits = m.forward(g, Mode::Train, nullptr, &cache);
  const auto b = bce_loss<double>(logits, g.labels, g.loss_mask);
  const Mat<double> d_tokens = m.backward(cache, b.grad);
  int isolated = 0;
  for (int q = 0; q < g.size(); ++q) {
    const auto k = g.kinds[static_cast<std::size_t>(q)];
    if (k == TokenKind::Gap || k == TokenKind::Padding) {
      ++isolated;
      CHECK(d_tokens.row(q).norm() == 0);
    }
  }
  CHECK(isolated > 0);
}

TEST_CASE("gap tokens are isolated and mask tokens are write-only") {
  const Clip c = gappy_clip(6);
  DModel m(small_model(), small_tokens(3, 16));
  m.init(5);
  const int sup[] = {2, 3};
  auto g = assemble_grid<double>(c, 1, sup, m.token_config(), 0);
  Rng mr(3);
  apply_mask_tokens(g, 0.3, m.mask_token(), mr);
  const Mat<double> tokens = m.embed(g);
  const Mat<double> base = m.forward_tokens(tokens, g.attention_mask, Mode::Eval, nullptr, nullptr);
  Rng noise(9);
  std::normal_distribution<double> n(0, 3);
  bool saw_gap = false, saw_mask = false;
  for (int q = 0; q < g.size(); ++q) {
    const auto kind = g.kinds[static_cast<std::size_t>(q)];
    if (kind == TokenKind::Present) continue;
    Mat<double> t = tokens;
    for (int d = 0; d < t.cols(); ++d) t(q, d) += n(noise);
    const Mat<double> out = m.forward_tokens(t, g.attention_mask, Mode::Eval, nullptr, nullptr);
    for (int r = 0; r < g.size(); ++r) {
      if (r == q) continue;
      const auto rk = g.kinds[static_cast<std::size_t>(r)];
      if (kind == TokenKind::Masked && rk == TokenKind::Masked) continue;
      INFO("perturbed ", q, " kind ", int(kind), " row ", r, " kind ", int(rk));
      CHECK(out.row(r) == base.row(r));
    }
    saw_gap |= kind == TokenKind::Gap;
    saw_mask |= kind == TokenKind::Masked;
  }
  CHECK(saw_gap);
  CHECK(saw_mask);

  // A present token reaches every mask token.
  int present = 0;
  while (g.kinds[static_cast<std::size_t>(present)] != TokenKind::Present) ++present;
  Mat<double> t = tokens;
  t.row(present).array() += 1.0;
  const Mat<double> out = m.forward_tokens(t, g.attention_mask, Mode::Eval, nullptr, nullptr);
  for (int r = 0; r < g.size(); ++r)
    if (g.kinds[static_cast<std::size_t>(r)] == TokenKind::Masked) CHECK_FALSE(out.row(r) == base.row(r));
}

TEST_CASE("non-finite parameters raise NumericError") {
  const Clip c = gappy_clip(7);
  DModel m(small_model(), small_tokens(3, 8));
  m.init(1);
  m.parameters().value(3)(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const int sup[] = {2};
  const auto g = assemble_grid<double>(c, 1, sup, m.token_config(), 0);
  CHECK_THROWS_AS(m.forward(g, Mode::Eval, nullptr, nullptr), NumericError);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  GeneratorConfig gen = small_config(8, 3, 24);
  const Clip c = generate_clip(gen);
  ModelConfig mc = ModelConfig::tiny();
  Model m(mc, tiny_tokens(3, 12));
  m.init(9);
  AdamState<Real> opt;
  opt.reset(m.parameters());
  opt.step = 17;
  opt.skipped = 2;
  for (auto& x : opt.m) x.setRandom();
  for (auto& x : opt.v) x = x.setRandom().cwiseAbs();

  const auto path = temp_path("ckpt.bin");
  save_checkpoint(path, m, opt, 123, "abc123");
  const Checkpoint ck = load_checkpoint(path, mc);
  CHECK(ck.step == 123);
  CHECK(ck.manifest_hash == "abc123");
  CHECK(ck.model_config == mc);
  CHECK(ck.token_config == m.token_config());
  CHECK(ck.optimizer.step == 17);
  CHECK(ck.optimizer.skipped == 2);
  const auto& a = m.parameters().all();
  const auto& b = ck.model->parameters().all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].value == b[i].value);
    CHECK(opt.m[i] == ck.optimizer.m[i]);
    CHECK(opt.v[i] == ck.optimizer.v[i]);
  }
  const int sup[] = {2, 3};
  const auto g = assemble_grid<Real>(c, 1, sup, m.token_config(), 0);
  CHECK(m.forward(g, Mode::Eval, nullptr, nullptr) == ck.model->forward(g, Mode::Eval, nullptr, nullptr));

  SUBCASE("architecture mismatch is a config error") {
    ModelConfig other = mc;
    other.layers = 3;
    CHECK_THROWS_AS(load_checkpoint(path, other), ConfigError);
    ModelConfig regularized = mc;
    regularized.drop_path = 0.3;
    CHECK_NOTHROW(load_checkpoint(path, regularized));
  }

  SUBCASE("corrupt files are data errors") {
    const auto bad = temp_path("bad.bin");
    {
      std::ofstream os(bad, std::ios::binary);
      os << "lart-ckpt/9\n";
    }
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    {
      std::ofstream os(bad, std::ios::binary);
      os << bytes.substr(0, bytes.size() / 2);
    }
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);
    CHECK_THROWS_AS(load_checkpoint(temp_path("missing.bin")), DataError);
    std::filesystem::remove(bad);
  }
  std::filesystem::remove(path);
}

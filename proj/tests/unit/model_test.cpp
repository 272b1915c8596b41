#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/model_fixtures.hpp"
#include "egqn/ad/ops.hpp"
#include "egqn/common/binary_io.hpp"
#include "egqn/model/checkpoint.hpp"

namespace {

using egqn::ad::Array;
using egqn::model::Episode;
using egqn::model::Mode;
using egqn::model::ModelConfig;
using egqn::model::ParamStore;
namespace ad = egqn::ad;
namespace fx = egqn::testing;
namespace model = egqn::model;

double max_abs_diff(const Array<double>& a, const Array<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

ParamStore<double> zeroed(const ParamStore<double>& p) {
  ParamStore<double> out;
  for (std::size_t i = 0; i < p.size(); ++i) out.add(p.names()[i], Array<double>::zeros(p[i].shape()));
  return out;
}

void set_param(ParamStore<double>& p, const std::string& name, std::vector<double> values) {
  p.at(name) = Array<double>(p.at(name).shape(), std::move(values), true);
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  ModelConfig c;
  c.steps = 9;
  c.mode = Mode::kGqn;
  c.output_std = 0.7;
  nlohmann::json j = c;
  auto back = j.get<ModelConfig>();
  EXPECT_EQ(back.steps, 9);
  EXPECT_EQ(back.mode, Mode::kGqn);
  EXPECT_DOUBLE_EQ(back.output_std, 0.7);
  EXPECT_EQ(c.grid(), 8);
  ModelConfig bad;
  bad.image_size = 30;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ModelConfig{};
  bad.steps = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(model::parse_mode("dense"), std::invalid_argument);
  EXPECT_NEAR(model::elbo_floor(1.4), 1.2554, 1e-4);
}

TEST(Params, SharedNamesShareValues) {
  ModelConfig c;
  c.mode = Mode::kGqn;
  auto gqn = model::init_params<float>(c, 5);
  c.mode = Mode::kEgqn;
  auto egqn = model::init_params<float>(c, 5);
  EXPECT_GT(egqn.size(), gqn.size());
  for (std::size_t i = 0; i < gqn.size(); ++i) {
    EXPECT_EQ(egqn.names()[i], gqn.names()[i]);
    EXPECT_EQ(egqn[i].vector(), gqn[i].vector());
  }
  EXPECT_EQ(egqn.at("attention.lambda").item(), 0.0f);
  auto other = model::init_params<float>(c, 6);
  EXPECT_NE(other.at("tower.conv1.weight").vector(), egqn.at("tower.conv1.weight").vector());
  // Glorot bound for a 2x2x3 -> 2x2x32 kernel.
  const double limit = std::sqrt(6.0 / (12 + 128));
  for (float v : egqn.at("tower.conv1.weight").data()) EXPECT_LE(std::abs(v), limit);
  for (float v : egqn.at("tower.conv1.bias").data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(egqn.at("missing"), std::out_of_range);
}

TEST(Encoder, OutputShapeAndDeterminism) {
  ModelConfig c;
  auto p = model::init_params<double>(c, 1);
  std::mt19937_64 rng(2);
  auto ep = fx::random_episode<double>(c, rng);
  auto r = model::encode_context(p, c, ep.contexts[0].image, ep.contexts[0].pose);
  EXPECT_EQ(r.shape(), (ad::Shape{8, 8, 64}));
  auto again = model::encode_context(p, c, ep.contexts[0].image, ep.contexts[0].pose);
  EXPECT_EQ(r.vector(), again.vector());
  EXPECT_THROW(model::encode_context(p, c, Array<double>::zeros({16, 16, 3}), ep.contexts[0].pose),
               ad::ShapeError);
}

TEST(Encoder, SumIsOrderIndependent) {
  ModelConfig c = fx::micro_config(Mode::kGqn);
  c.image_size = 16;
  auto p = model::init_params<float>(c, 3);
  std::mt19937_64 rng(4);
  auto ep = fx::random_episode<float>(c, rng);
  std::vector<Array<float>> rs;
  for (const auto& v : ep.contexts) rs.push_back(model::encode_context(p, c, v.image, v.pose));
  std::vector<Array<float>> forward{rs[0], rs[1], rs[2]};
  std::vector<Array<float>> reversed{rs[2], rs[0], rs[1]};
  auto a = ad::add_n(std::span<const Array<float>>(forward));
  auto b = ad::add_n(std::span<const Array<float>>(reversed));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(Generator, ZeroWeightsLeaveStateAtRest) {
  ModelConfig c = fx::micro_config(Mode::kGqn);
  auto p = zeroed(model::init_params<double>(c, 1));
  auto state = model::initial_state<double>(c);
  std::mt19937_64 rng(5);
  auto canvas = fx::random_array({8, 8, 3}, rng);
  state.canvas = canvas;
  auto attended = fx::random_array({2, 2, 8}, rng);
  auto view = fx::random_array({2, 2, 7}, rng);
  auto z = fx::random_array({2, 2, 2}, rng);
  auto next = model::generation_step(p, c, state, attended, view, z);
  for (double v : next.hidden.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(next.canvas.vector(), canvas.vector());
}

TEST(Generator, ShapesHoldForTwelveSteps) {
  ModelConfig c = fx::micro_config(Mode::kGqn);
  c.image_size = 16;
  auto p = model::init_params<double>(c, 1);
  auto state = model::initial_state<double>(c);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 12; ++i) {
    state = model::generation_step(p, c, state, fx::random_array({4, 4, 8}, rng), fx::random_array({4, 4, 7}, rng),
                                   fx::random_array({4, 4, 2}, rng));
    ASSERT_EQ(state.hidden.shape(), (ad::Shape{4, 4, 4}));
    ASSERT_EQ(state.cell.shape(), (ad::Shape{4, 4, 4}));
    ASSERT_EQ(state.canvas.shape(), (ad::Shape{16, 16, 3}));
  }
}

TEST(Generator, ThreeStepGradientsMatchFiniteDifferences) {
  ModelConfig c = fx::micro_config(Mode::kGqn);
  auto p = model::init_params<double>(c, 7);
  std::mt19937_64 rng(8);
  auto attended = fx::random_array({2, 2, 8}, rng);
  auto view = fx::random_array({2, 2, 7}, rng, -1, 1, false);
  std::vector<Array<double>> zs;
  for (int i = 0; i < 3; ++i) zs.push_back(fx::random_array({2, 2, 2}, rng));
  const std::vector<std::string> names{"generator.lstm.weight", "generator.lstm.bias", "generator.upsample.weight"};
  std::vector<Array<double>> leaves{p.at(names[0]), p.at(names[1]), p.at(names[2]), attended, zs[0], zs[2]};
  auto r = fx::grad_check(
      [&](const std::vector<Array<double>>& l) {
        auto store = fx::with_leaves(p, names, {l[0], l[1], l[2]});
        auto state = model::initial_state<double>(c);
        std::vector<Array<double>> latents{l[4], zs[1], l[5]};
        for (int i = 0; i < 3; ++i) state = model::generation_step(store, c, state, l[3], view, latents[i]);
        return fx::weighted_sum(state.canvas);
      },
      leaves);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_analytic << " vs " << r.worst_numeric << " leaf " << r.worst_leaf;
}

TEST(ElboLoss, TiedPriorAndPosteriorGiveZeroKl) {
  for (Mode mode : {Mode::kGqn, Mode::kEgqn}) {
    ModelConfig c = fx::micro_config(mode);
    auto p = model::init_params<double>(c, 9);
    for (const char* head : {"generator.prior", "inference.posterior"}) {
      p.at(std::string(head) + ".weight") = Array<double>::zeros(p.at(std::string(head) + ".weight").shape());
      set_param(p, std::string(head) + ".bias", {0.3, -0.2, 0.1, -0.5});
    }
    std::mt19937_64 rng(10);
    auto terms = model::elbo_loss(p, c, fx::random_episode<double>(c, rng), 1);
    EXPECT_EQ(terms.kl.item(), 0.0);
    EXPECT_DOUBLE_EQ(terms.loss.item(), terms.reconstruction.item());
  }
}

TEST(ElboLoss, ExactMeanAndZeroKlSitOnTheFloor) {
  ModelConfig c = fx::micro_config(Mode::kEgqn);
  auto p = zeroed(model::init_params<double>(c, 11));
  set_param(p, "output.bias", {0.25, -0.5, 0.75});
  std::mt19937_64 rng(12);
  auto ep = fx::random_episode<double>(c, rng);
  std::vector<double> target(8 * 8 * 3);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = std::vector<double>{0.25, -0.5, 0.75}[i % 3];
  ep.query.image = Array<double>(ad::Shape{8, 8, 3}, target);
  auto terms = model::elbo_loss(p, c, ep, 3);
  EXPECT_EQ(terms.kl.item(), 0.0);
  EXPECT_NEAR(terms.loss.item(), model::elbo_floor(1.4), 1e-12);
  EXPECT_NEAR(terms.loss.item(), 1.25541, 1e-5);
}

TEST(ElboLoss, NeverBelowFloor) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c = fx::micro_config(trial % 2 ? Mode::kGqn : Mode::kEgqn);
    auto p = model::init_params<double>(c, static_cast<std::uint64_t>(trial));
    if (c.mode == Mode::kEgqn) set_param(p, "attention.lambda", {0.5});
    auto terms = model::elbo_loss(p, c, fx::random_episode<double>(c, rng), static_cast<std::uint64_t>(trial));
    EXPECT_GE(terms.loss.item(), model::elbo_floor(1.4) - 1e-6);
    EXPECT_GE(terms.kl.item(), 0.0);
    EXPECT_TRUE(std::isfinite(terms.loss.item()));
  }
}

TEST(ElboLoss, FullLossGradientMatchesFiniteDifferences) {
  for (Mode mode : {Mode::kGqn, Mode::kEgqn}) {
    ModelConfig c = fx::micro_config(mode);
    auto p = model::init_params<double>(c, 14);
    if (mode == Mode::kEgqn) set_param(p, "attention.lambda", {0.6});
    std::mt19937_64 rng(15);
    auto ep = fx::random_episode<double>(c, rng);
    std::vector<std::string> names{"tower.conv1.weight", "tower.res2.conv_b.weight", "inference.lstm.weight",
                                   "generator.prior.bias", "output.weight"};
    if (mode == Mode::kEgqn) {
      names.push_back("attention.key.weight");
      names.push_back("attention.lambda");
    }
    std::vector<Array<double>> leaves;
    for (const auto& n : names) leaves.push_back(p.at(n));
    auto r = fx::grad_check(
        [&](const std::vector<Array<double>>& l) {
          return model::elbo_loss(fx::with_leaves(p, names, l), c, ep, 21).loss;
        },
        leaves, 1e-5, 12);
    EXPECT_LT(r.max_rel_error, 1e-4) << model::to_string(mode) << " " << r.worst_analytic << " vs "
                                     << r.worst_numeric << " leaf " << names[r.worst_leaf];
  }
}

TEST(ElboLoss, ZeroLambdaMatchesGqn) {
  std::mt19937_64 rng(16);
  ModelConfig eg = fx::micro_config(Mode::kEgqn);
  eg.image_size = 16;
  ModelConfig g = eg;
  g.mode = Mode::kGqn;
  auto pe = model::init_params<float>(eg, 17);
  auto pg = model::init_params<float>(g, 17);
  for (int i = 0; i < 5; ++i) {
    auto ep = fx::random_episode<float>(eg, rng);
    auto le = model::elbo_loss(pe, eg, ep, 2);
    auto lg = model::elbo_loss(pg, g, ep, 2);
    EXPECT_EQ(le.loss.item(), lg.loss.item());
    EXPECT_EQ(model::render(pe, eg, ep, 3).vector(), model::render(pg, g, ep, 3).vector());
  }
}

TEST(Render, DeterministicBoundedAndOrderInvariant) {
  for (Mode mode : {Mode::kGqn, Mode::kEgqn}) {
    ModelConfig c = fx::micro_config(mode);
    c.image_size = 16;
    auto p = model::init_params<double>(c, 18);
    if (mode == Mode::kEgqn) set_param(p, "attention.lambda", {1.0});
    // Large output weights so clipping actually happens.
    auto ow = p.at("output.weight").vector();
    for (auto& v : ow) v *= 20.0;
    set_param(p, "output.weight", ow);
    std::mt19937_64 rng(19);
    auto ep = fx::random_episode<double>(c, rng);
    auto a = model::render(p, c, ep, 4);
    auto b = model::render(p, c, ep, 4);
    EXPECT_EQ(a.shape(), (ad::Shape{16, 16, 3}));
    EXPECT_EQ(a.vector(), b.vector());
    for (double v : a.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    auto shuffled = ep;
    std::swap(shuffled.contexts[0], shuffled.contexts[2]);
    EXPECT_LT(max_abs_diff(model::render(p, c, shuffled, 4), a), 1e-5);
    EXPECT_NE(model::render(p, c, ep, 5).vector(), a.vector());
  }
}

TEST(Render, FloatTracksDouble) {
  ModelConfig c = fx::micro_config(Mode::kEgqn);
  c.image_size = 16;
  auto pd = model::init_params<double>(c, 20);
  set_param(pd, "attention.lambda", {0.4});
  auto pf = pd.cast<float>();
  std::mt19937_64 rng(21);
  auto ed = fx::random_episode<double>(c, rng);
  Episode<float> ef{{}, {ad::cast<float>(ed.query.image), ed.query.pose}, ed.intrinsics};
  for (const auto& v : ed.contexts) ef.contexts.push_back({ad::cast<float>(v.image), v.pose});
  auto rd = model::render(pd, c, ed, 6);
  auto rf = model::render(pf, c, ef, 6);
  for (std::size_t i = 0; i < rd.size(); ++i) EXPECT_NEAR(rf[i], rd[i], 1e-4);
  EXPECT_NEAR(model::elbo_loss(pf, c, ef, 6).loss.item(), model::elbo_loss(pd, c, ed, 6).loss.item(), 1e-4);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("egqn_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  ModelConfig c = fx::micro_config(Mode::kEgqn);
  auto p = model::init_params<float>(c, 22);
  model::save_checkpoint(path("a.ckpt"), c, p, {{"step", 17}});
  auto ck = model::load_checkpoint(path("a.ckpt"));
  EXPECT_EQ(ck.config.steps, c.steps);
  EXPECT_EQ(ck.config.mode, Mode::kEgqn);
  EXPECT_EQ(ck.metadata.at("step"), 17);
  ASSERT_EQ(ck.params.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(ck.params.names()[i], p.names()[i]);
    EXPECT_EQ(ck.params[i].shape(), p[i].shape());
    EXPECT_EQ(ck.params[i].vector(), p[i].vector());
  }
}

TEST_F(CheckpointTest, CorruptionAndTruncationAreDetected) {
  ModelConfig c = fx::micro_config(Mode::kGqn);
  model::save_checkpoint(path("b.ckpt"), c, model::init_params<float>(c, 23));
  auto bytes = egqn::read_file(path("b.ckpt"));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  egqn::write_file(path("flip.ckpt"), flipped);
  EXPECT_THROW(model::load_checkpoint(path("flip.ckpt")), egqn::FormatError);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 3));
  egqn::write_file(path("cut.ckpt"), cut);
  EXPECT_THROW(model::load_checkpoint(path("cut.ckpt")), egqn::FormatError);
  EXPECT_THROW(model::load_checkpoint(path("missing.ckpt")), std::runtime_error);
}

TEST_F(CheckpointTest, MismatchedParametersAreRejected) {
  ModelConfig c = fx::micro_config(Mode::kGqn);
  auto p = model::init_params<float>(c, 24);
  ModelConfig claims = c;
  claims.mode = Mode::kEgqn;
  model::save_checkpoint(path("c.ckpt"), claims, p);
  EXPECT_THROW(model::load_checkpoint(path("c.ckpt")), egqn::FormatError);
}

}  // namespace

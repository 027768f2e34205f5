#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "melstorm/error.hpp"
#include "melstorm/model.hpp"
#include "melstorm/ops.hpp"
#include "melstorm/train.hpp"
#include "melstorm/weights.hpp"
#include "oracles.hpp"

using namespace melstorm;

namespace {

std::vector<double> flat_params(const Model& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

// Shared small training set; feature extraction dominates the cost.
const Dataset& small_train() {
  static const Dataset d = fixture::synth_features(6, 501);
  return d;
}
const Dataset& small_val() {
  static const Dataset d = fixture::synth_features(2, 502);
  return d;
}

}  // namespace

TEST(Model, ParameterCount) { EXPECT_EQ(Model::build(ModelConfig{}, 1).parameter_count(), 25402u); }

TEST(Model, BlockExtents) {
  const auto e = block_extents(ModelConfig{}, {64, 94});
  ASSERT_EQ(e.size(), 4u);
  EXPECT_EQ(e[0], (Extent2{32, 47}));
  EXPECT_EQ(e[1], (Extent2{16, 24}));
  EXPECT_EQ(e[2], (Extent2{8, 12}));
  EXPECT_EQ(e[3], (Extent2{4, 6}));
}

TEST(Model, SeedDeterminesInitialization) {
  EXPECT_EQ(flat_params(Model::build(ModelConfig{}, 9)), flat_params(Model::build(ModelConfig{}, 9)));
  EXPECT_NE(flat_params(Model::build(ModelConfig{}, 9)), flat_params(Model::build(ModelConfig{}, 10)));
  EXPECT_EQ(Model::build(ModelConfig{}, 9).checksum(), Model::build(ModelConfig{}, 9).checksum());
}

TEST(Model, InitialValues) {
  const auto m = Model::build(ModelConfig{}, 4);
  for (int i = 0; i < 4; ++i) {
    const std::string idx = std::to_string(i + 1);
    for (double g : m.parameter("bn" + idx + ".gamma").data()) EXPECT_EQ(g, 1.0);
    for (double b : m.parameter("bn" + idx + ".beta").data()) EXPECT_EQ(b, 0.0);
    for (double b : m.parameter("conv" + idx + ".bias").data()) EXPECT_EQ(b, 0.0);
    const auto& s = m.bn_stats()[static_cast<std::size_t>(i)];
    for (double v : s.mean) EXPECT_EQ(v, 0.0);
    for (double v : s.var) EXPECT_EQ(v, 1.0);
  }
  // He-normal: std sqrt(2 / fan_in), fan_in = 32 * 3 * 3.
  const auto w = m.parameter("conv4.weight").data();
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size() - 1);
  EXPECT_NEAR(std::sqrt(var), std::sqrt(2.0 / 288.0), 0.05 * std::sqrt(2.0 / 288.0));
  EXPECT_NEAR(mean, 0.0, 0.005);
}

TEST(Model, LogitsShapeAndBatchIndependence) {
  const auto m = Model::build(ModelConfig{}, 2);
  const auto one = fixture::random_input(1, 8);
  const Tensor z = m.logits(one);
  EXPECT_EQ(z.shape(), (Shape{1, 10}));
  std::vector<double> stacked;
  for (int i = 0; i < 3; ++i) stacked.insert(stacked.end(), one.data().begin(), one.data().end());
  const Tensor z3 = m.logits(Tensor::from({3, 1, 64, 94}, stacked));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(z3.data()[r * 10 + k], z.data()[k]);
}

TEST(Model, WrongInputRejected) {
  auto m = Model::build(ModelConfig{}, 2);
  EXPECT_THROW(m.logits(fixture::random_input(1, 1, 32, 94)), ShapeError);
  EXPECT_THROW(m.logits(Tensor::zeros({1, 2, 64, 94})), ShapeError);
  EXPECT_THROW(m.logits(Tensor::zeros({64, 94})), ShapeError);
}

TEST(Model, CopiesAreIndependent) {
  auto a = Model::build(ModelConfig{}, 2);
  Model b = a;
  b.parameters()[0].tensor.mutable_data()[0] += 1.0;
  EXPECT_NE(a.checksum(), b.checksum());
  EXPECT_NE(a.parameters()[0].tensor.data()[0], b.parameters()[0].tensor.data()[0]);
}

TEST(Model, ParameterGradientsMatchFiniteDifferences) {
  auto m = Model::build(ModelConfig{}, 12);
  const Tensor x = fixture::random_input(4, 13);
  const std::vector<std::size_t> labels{1, 4, 7, 9};
  auto loss_at = [&] {
    auto copy = m;
    return cross_entropy_loss(copy.forward(x, Mode::train), labels).item();
  };
  for (auto& p : m.parameters()) p.tensor.zero_grad();
  backprop(cross_entropy_loss(m.forward(x, Mode::train), labels));

  Rng pick(14);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto& p = m.parameters()[pick.uniform_index(m.parameters().size())];
    const std::size_t i = pick.uniform_index(p.tensor.numel());
    const double analytic = p.tensor.grad()[i];
    const double orig = p.tensor.data()[i];
    p.tensor.mutable_data()[i] = orig + h;
    const double up = loss_at();
    p.tensor.mutable_data()[i] = orig - h;
    const double down = loss_at();
    p.tensor.mutable_data()[i] = orig;
    const double err = oracle::rel_error(analytic, (up - down) / (2 * h), 1e-4);
    worst = std::max(worst, err);
    EXPECT_LT(err, 1e-4) << p.name << "[" << i << "]";
  }
  RecordProperty("worst_rel_error", std::to_string(worst));
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto m = Model::build(ModelConfig{}, 3);
  const auto before = flat_params(m);
  train(m, small_train(), Dataset{}, TrainConfig{0.0, 1, 16, 2});
  EXPECT_EQ(flat_params(m), before);
}

TEST(Train, DeterministicGivenSeeds) {
  auto a = Model::build(ModelConfig{}, 3);
  auto b = Model::build(ModelConfig{}, 3);
  const TrainConfig cfg{0.001, 2, 16, 5};
  const auto la = train(a, small_train(), small_val(), cfg);
  const auto lb = train(b, small_train(), small_val(), cfg);
  EXPECT_EQ(a.checksum(), b.checksum());
  ASSERT_EQ(la.size(), 2u);
  for (std::size_t e = 0; e < la.size(); ++e) {
    EXPECT_EQ(la[e].train_loss, lb[e].train_loss);
    EXPECT_EQ(la[e].val_acc, lb[e].val_acc);
  }
}

TEST(Train, LossDecreases) {
  auto m = Model::build(ModelConfig{}, 3);
  std::vector<EpochRecord> seen;
  const auto log = train(m, small_train(), small_val(), TrainConfig{0.001, 5, 16, 1},
                         [&](const EpochRecord& r) { seen.push_back(r); });
  ASSERT_EQ(log.size(), 5u);
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_EQ(log.front().epoch, 1u);
  EXPECT_LT(log.back().train_loss, log.front().train_loss);
  for (const auto& r : log) {
    EXPECT_GE(r.val_acc, 0.0);
    EXPECT_LE(r.val_acc, 1.0);
  }
}

TEST(Train, UntrainedModelNearChance) {
  const double acc = evaluate(Model::build(ModelConfig{}, 42), small_train());
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 0.35);
}

TEST(Train, PredictionsIndependentOfOrderAndBatching) {
  const auto m = Model::build(ModelConfig{}, 8);
  const auto& d = small_val();
  const auto forward = predict(m, d, 64);
  Dataset reversed;
  for (std::size_t i = d.size(); i-- > 0;) reversed.add(d.features[i], d.labels[i]);
  const auto backward = predict(m, reversed, 3);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(forward[i], backward[d.size() - 1 - i]);
}

TEST(Train, InvalidConfigRejected) {
  EXPECT_THROW((TrainConfig{-1.0, 1, 1, 0}.validate()), Error);
  EXPECT_THROW((TrainConfig{0.1, 0, 1, 0}.validate()), Error);
  EXPECT_THROW((TrainConfig{0.1, 1, 0, 0}.validate()), Error);
}

TEST(Weights, RoundTripWithinFloatPrecision) {
  auto m = Model::build(ModelConfig{}, 21);
  train(m, small_val(), Dataset{}, TrainConfig{0.001, 1, 8, 0});
  const auto back = decode_weights(encode_weights(m), ModelConfig{});
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t p = 0; p < m.parameters().size(); ++p) {
    EXPECT_EQ(back.parameters()[p].name, m.parameters()[p].name);
    const auto a = m.parameters()[p].tensor.data();
    const auto b = back.parameters()[p].tensor.data();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::abs(a[i] - b[i]), 1e-6 * std::max(1.0, std::abs(a[i])));
  }
  for (std::size_t l = 0; l < m.bn_stats().size(); ++l) {
    for (std::size_t c = 0; c < m.bn_stats()[l].var.size(); ++c) {
      EXPECT_NEAR(back.bn_stats()[l].var[c], m.bn_stats()[l].var[c], 1e-6 * std::max(1.0, m.bn_stats()[l].var[c]));
      EXPECT_NEAR(back.bn_stats()[l].mean[c], m.bn_stats()[l].mean[c], 1e-6 * std::max(1.0, std::abs(m.bn_stats()[l].mean[c])));
    }
  }
  // A second round trip is exact: values are already float-representable.
  EXPECT_EQ(encode_weights(back), encode_weights(decode_weights(encode_weights(back))));
  const auto x = fixture::random_input(1, 2);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(back.logits(x).data()[k], m.logits(x).data()[k], 1e-4);
}

TEST(Weights, FileRoundTrip) {
  fixture::TempDir dir("weights");
  const auto m = Model::build(ModelConfig{}, 5);
  save_weights(m, dir.path() / "m.amnw");
  EXPECT_EQ(encode_weights(load_weights(dir.path() / "m.amnw")), encode_weights(m));
  EXPECT_THROW(load_weights(dir.path() / "missing.amnw"), Error);
}

namespace {
void expect_weights_error(std::span<const std::uint8_t> bytes, const std::string& fragment,
                          const std::optional<ModelConfig>& expected = std::nullopt) {
  try {
    decode_weights(bytes, expected);
    FAIL() << "expected FormatError mentioning " << fragment;
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}
}  // namespace

TEST(Weights, CorruptFilesRejected) {
  const auto bytes = encode_weights(Model::build(ModelConfig{}, 5));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_weights_error(bad_magic, "magic");
  auto bad_version = bytes;
  bad_version[4] = 9;
  expect_weights_error(bad_version, "version");
  expect_weights_error(std::span(bytes).first(bytes.size() - 3), "truncated");
  expect_weights_error(std::span(bytes).first(20), "truncated");
  auto trailing = bytes;
  trailing.push_back(0);
  expect_weights_error(trailing, "trailing");
  ModelConfig other;
  other.conv_layers.pop_back();
  expect_weights_error(bytes, "fingerprint", other);
}

TEST(Weights, FingerprintRoundTrip) {
  const ModelConfig cfg;
  EXPECT_EQ(ModelConfig::from_fingerprint(cfg.fingerprint()), cfg);
}

#include <doctest.h>

#include <filesystem>
#include <random>

#include "abcran/binary_io.hpp"
#include "abcran/errors.hpp"
#include "abcran/model.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace abcran;
using namespace abcran::model;
using ad::Tape;
using ad::Var;
using testing::random_tensor;

namespace {

ArchConfig tiny_config() {
  ArchConfig c;
  c.nx = 16;
  c.latent_dim = 2;
  c.conv_channels = {2, 3};
  c.kernel = 3;
  c.dense_widths = {6};
  c.lstm_hidden = 4;
  c.k_in = 3;
  c.k_out = 3;
  return c;
}

void zero_all(AbcranModel& m) {
  for (auto& p : m.parameters()) p.tensor.fill(0.0);
}

std::vector<Tensor> param_tensors(const AbcranModel& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.tensor);
  return out;
}

}  // namespace

TEST_CASE("default architecture has 15 named layers and the documented shapes") {
  const ArchConfig c;
  CHECK(c.layer_names().size() == 15);
  AbcranModel m(c, 1);
  CHECK(m.parameter("enc_conv0.weight").tensor.shape() == Shape{8, 1, 5});
  CHECK(m.parameter("enc_conv1.weight").tensor.shape() == Shape{16, 8, 5});
  CHECK(m.parameter("enc_dense0.weight").tensor.shape() == Shape{16 * 64, 128});
  CHECK(m.parameter("enc_latent.weight").tensor.shape() == Shape{128, 2});
  CHECK(m.parameter("prop_enc_lstm.hidden_weight").tensor.shape() == Shape{64, 256});
  CHECK(m.parameter("prop_dec_lstm.input_weight").tensor.shape() == Shape{2 + 64, 256});
  CHECK(m.parameter("prop_out.weight").tensor.shape() == Shape{64, 2});
  CHECK(m.parameter("dec_dense0.weight").tensor.shape() == Shape{128, 16 * 64});
  CHECK(m.parameter("dec_conv0.weight").tensor.shape() == Shape{1, 8, 5});
  CHECK_THROWS_AS(m.parameter("nope"), InvalidArgument);
}

TEST_CASE("architecture validation") {
  ArchConfig c;
  c.nx = 250;
  CHECK_THROWS_AS(AbcranModel(c, 0), InvalidArgument);
  c = ArchConfig{};
  c.latent_dim = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = ArchConfig{};
  c.kernel = 4;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  CHECK(ArchConfig::from_json(ArchConfig::desk(64).to_json()) == ArchConfig::desk(64));
}

TEST_CASE("encode") {
  std::mt19937_64 rng(1);
  AbcranModel m(ArchConfig{}, 7);

  SUBCASE("default shape") { CHECK(m.encode(random_tensor({4, 256}, rng)).shape() == Shape{4, 2}); }
  SUBCASE("zero input through zero weights gives the final bias") {
    zero_all(m);
    m.parameter("enc_latent.bias").tensor = Tensor({2}, std::vector<double>{0.25, -1.5});
    const Tensor z = m.encode(Tensor({3, 256}, 0.0));
    for (std::size_t b = 0; b < 3; ++b) {
      CHECK(z.at({b, 0}) == 0.25);
      CHECK(z.at({b, 1}) == -1.5);
    }
  }
  SUBCASE("batch rows are independent") {
    const Tensor row = random_tensor({1, 256}, rng);
    Tensor two({2, 256});
    std::copy(row.data().begin(), row.data().end(), two.data().begin());
    std::copy(row.data().begin(), row.data().end(), two.data().begin() + 256);
    const Tensor z = m.encode(two);
    CHECK(z.at({0, 0}) == z.at({1, 0}));
    CHECK(z.at({0, 1}) == z.at({1, 1}));
    CHECK(m.encode(row).at({0, 0}) == z.at({0, 0}));
  }
  CHECK_THROWS_AS(m.encode(Tensor({2, 255})), ShapeError);
}

TEST_CASE("decode") {
  std::mt19937_64 rng(2);
  AbcranModel m(ArchConfig{}, 8);
  const Tensor z = random_tensor({4, 2}, rng);
  CHECK(m.decode(z).shape() == Shape{4, 256});
  CHECK(m.decode(z) == m.decode(z));
  const Tensor x = random_tensor({3, 256}, rng);
  CHECK(m.decode(m.encode(x)).shape() == x.shape());
  CHECK_THROWS_AS(m.decode(Tensor({4, 3})), ShapeError);
}

TEST_CASE("shape contract across configs and batch sizes") {
  std::mt19937_64 rng(3);
  for (std::size_t latent : {1, 2, 5}) {
    for (std::size_t batch : {1, 3}) {
      ArchConfig c = tiny_config();
      c.latent_dim = latent;
      c.k_out = 2;
      AbcranModel m(c, latent);
      CHECK(m.encode(random_tensor({batch, 16}, rng)).shape() == Shape{batch, latent});
      CHECK(m.decode(random_tensor({batch, latent}, rng)).shape() == Shape{batch, 16});
      CHECK(m.propagate(random_tensor({batch, 3, latent}, rng)).shape() == Shape{batch, 2, latent});
    }
  }
  ArchConfig no_dense = tiny_config();
  no_dense.dense_widths.clear();
  AbcranModel m(no_dense, 1);
  CHECK(m.decode(m.encode(random_tensor({2, 16}, rng))).shape() == Shape{2, 16});
}

TEST_CASE("propagate") {
  std::mt19937_64 rng(4);
  AbcranModel m(ArchConfig{}, 9);
  CHECK(m.propagate(random_tensor({4, 10, 2}, rng)).shape() == Shape{4, 10, 2});
  CHECK_THROWS_AS(m.propagate(Tensor({4, 9, 2})), ShapeError);
  zero_all(m);
  const Tensor out = m.propagate(random_tensor({2, 10, 2}, rng));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("propagator gradients match finite differences") {
  std::mt19937_64 rng(5);
  AbcranModel m(tiny_config(), 10);
  // randomise biases too so no parameter sits at a special point
  for (auto& p : m.parameters()) {
    for (auto& v : p.tensor.data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  }
  const Tensor seq = random_tensor({2, 3, 2}, rng);
  testing::TensorGraph g = [&](Tape& tape, const std::vector<Var>& vars) {
    AbcranModel::Bound b{vars};
    return m.propagate(b, tape.constant(seq));
  };
  auto inputs = param_tensors(m);
  // the finite-difference oracle perturbs every parameter; only propagator ones affect the output
  CHECK(testing::check_tensor(g, inputs, 5) < 1e-5);
}

TEST_CASE("full model gradients match finite differences") {
  std::mt19937_64 rng(6);
  AbcranModel m(tiny_config(), 11);
  for (auto& p : m.parameters()) {
    for (auto& v : p.tensor.data()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
  }
  const Tensor window = random_tensor({2 * 3, 16}, rng);
  const Tensor target = random_tensor({2 * 3, 16}, rng);
  testing::ScalarGraph loss = [&](Tape& tape, const std::vector<Var>& vars) {
    AbcranModel::Bound b{vars};
    Var x = tape.constant(window);
    Var z = m.encode(b, x);
    Var recon = m.decode(b, z);
    Var pred = m.decode(b, ad::reshape(m.propagate(b, ad::reshape(z, {2, 3, 2})), {6, 2}));
    Var l1 = ad::mean_all(ad::square(ad::sub(recon, x)));
    Var l2 = ad::mean_all(ad::square(ad::sub(pred, tape.constant(target))));
    return ad::add(ad::scale(l1, 0.3), ad::scale(l2, 0.7));
  };
  const auto inputs = param_tensors(m);
  const auto a = testing::analytic(loss, inputs);
  const auto n = testing::numeric(loss, inputs, 1e-6);
  for (std::size_t k = 0; k < a.size(); ++k) {
    INFO(m.parameters()[k].name);
    CHECK(testing::relative_error(a[k], n[k]) < 1e-4);
  }
}

TEST_CASE("rollout block structure") {
  std::mt19937_64 rng(7);
  ArchConfig c = tiny_config();
  c.k_in = 3;
  c.k_out = 2;
  AbcranModel m(c, 12);
  const Tensor seed = random_tensor({3, 16}, rng);

  // one block by hand
  const Tensor z0 = m.encode(seed);
  const Tensor p1 = m.propagate(z0.reshaped({1, 3, 2})).reshaped({2, 2});
  const Tensor f1 = m.decode(p1);
  CHECK(rollout(m, seed, 2) == f1);

  // second block is seeded with the newest k_in latents: z0[2], p1[0], p1[1]
  Tensor w2({1, 3, 2}, std::vector<double>{z0[4], z0[5], p1[0], p1[1], p1[2], p1[3]});
  const Tensor f2 = m.decode(m.propagate(w2).reshaped({2, 2}));
  const Tensor four = rollout(m, seed, 4);
  REQUIRE(four.shape() == Shape{4, 16});
  for (std::size_t i = 0; i < 32; ++i) CHECK(four[i] == f1[i]);
  for (std::size_t i = 0; i < 32; ++i) CHECK(four[32 + i] == f2[i]);

  const Tensor three = rollout(m, seed, 3);
  for (std::size_t i = 0; i < 48; ++i) CHECK(three[i] == four[i]);

  CHECK_THROWS_AS(rollout(m, seed, 0), InvalidArgument);
  CHECK_THROWS_AS(rollout(m, Tensor({2, 16}), 2), ShapeError);
}

TEST_CASE("initialisation is seed-determined") {
  AbcranModel a(tiny_config(), 3), b(tiny_config(), 3), c(tiny_config(), 4);
  CHECK(param_tensors(a) == param_tensors(b));
  CHECK(param_tensors(a) != param_tensors(c));
}

TEST_CASE("save/load round-trip") {
  const auto dir = testing::scratch_dir("model_roundtrip");
  std::mt19937_64 rng(8);
  AbcranModel m(ArchConfig::desk(64), 21);
  save_model(m, dir);
  const AbcranModel back = load_model(dir);
  CHECK(back.config() == m.config());
  CHECK(back.seed() == m.seed());
  CHECK(param_tensors(back) == param_tensors(m));
  const Tensor x = random_tensor({2, 64}, rng);
  CHECK(back.decode(back.encode(x)) == m.decode(m.encode(x)));
  const Tensor seed = random_tensor({10, 64}, rng);
  CHECK(rollout(back, seed, 25) == rollout(m, seed, 25));

  const auto arch = io::read_json(dir / "arch.json");
  CHECK(arch["parameters"][1]["offset"] == m.parameters()[0].tensor.size() * 8);

  SUBCASE("tampered weights length") {
    std::filesystem::resize_file(dir / "weights.bin", std::filesystem::file_size(dir / "weights.bin") - 8);
    CHECK_THROWS_AS(load_model(dir), FormatError);
  }
  SUBCASE("version mismatch") {
    auto a = arch;
    a["version"] = 2;
    io::write_json(dir / "arch.json", a);
    CHECK_THROWS_AS(load_model(dir), FormatError);
  }
  SUBCASE("manifest shape mismatch") {
    auto a = arch;
    a["parameters"][0]["shape"] = {1, 2, 3};
    io::write_json(dir / "arch.json", a);
    CHECK_THROWS_AS(load_model(dir), FormatError);
  }
}

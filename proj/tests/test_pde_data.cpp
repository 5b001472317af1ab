#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "abcran/binary_io.hpp"
#include "abcran/errors.hpp"
#include "abcran/pde_data.hpp"
#include "test_support.hpp"

using namespace abcran;
using namespace abcran::data;

TEST_CASE("exact solution at t = 0 is the initial profile") {
  const InitialProfile p;
  CHECK(exact_solution(0.9, 0.3, 0.0, p) == p(0.3));
  CHECK(exact_solution(1.2, 0.3, 0.0, p) == p(0.3));
}

TEST_CASE("exact solution translates with speed mu") {
  const InitialProfile p{5e-3, 0.25};
  CHECK(exact_solution(1.0, 0.3, 0.1, p) == doctest::Approx(exact_solution(1.0, 0.2, 0.0, p)).epsilon(1e-13));
}

TEST_CASE("Gaussian peak value") {
  // 1/sqrt(2*pi*0.005), 30-digit reference
  CHECK(exact_solution(1.0, 0.0, 0.0, InitialProfile{}) == doctest::Approx(5.64189583547756286948).epsilon(1e-14));
}

TEST_CASE("translation property holds to 1e-12 on grid-aligned shifts") {
  const InitialProfile p{5e-3, 0.2};
  const GridSpec g{64, 0.0, 1.0, 50, 0.5};
  double worst = 0.0;
  for (double mu : {0.775, 1.0, 1.25}) {
    for (std::size_t j = 0; j + 5 < g.nt; j += 3) {
      const double delta = 5 * g.dt();
      for (std::size_t i = 0; i < g.nx; ++i) {
        const double x = g.x(i);
        worst = std::max(worst, std::abs(exact_solution(mu, x, g.t(j) + delta, p) -
                                         exact_solution(mu, x - mu * delta, g.t(j), p)));
      }
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("parameter grid") {
  const auto g = make_parameter_grid(0.775, 1.25, 20);
  REQUIRE(g.mu_train.size() == 20);
  REQUIRE(g.mu_test.size() == 19);
  CHECK(g.mu_train.front() == 0.775);
  CHECK(g.mu_train.back() == 1.25);
  CHECK(g.mu_train[1] - g.mu_train[0] == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(g.mu_test[0] == doctest::Approx(0.7875).epsilon(1e-15));
  CHECK(std::find(g.mu_test.begin(), g.mu_test.end(), 1.0125) != g.mu_test.end());

  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < g.mu_train.size(); ++i) {
    CHECK(g.mu_train[i + 1] > g.mu_train[i]);
    worst = std::max(worst, std::abs(g.mu_test[i] - (g.mu_train[i] + g.mu_train[i + 1]) / 2.0));
  }
  CHECK(worst == 0.0);

  CHECK_THROWS_AS(make_parameter_grid(0.775, 1.25, 1), InvalidArgument);
  CHECK_THROWS_AS(make_parameter_grid(1.0, 1.0, 5), InvalidArgument);
}

TEST_CASE("default dataset shape and shared initial condition") {
  const auto mu = make_parameter_grid(0.775, 1.25, 20).mu_train;
  const auto ds = generate_dataset(GridSpec{}, InitialProfile{}, mu);
  CHECK(ds.snapshots.shape() == Shape{20, 200, 256});
  CHECK(ds.snapshots.all_finite());
  const auto first = ds.profile_at(0, 0);
  for (std::size_t m = 1; m < ds.n_mu(); ++m) {
    const auto row = ds.profile_at(m, 0);
    CHECK(std::equal(row.begin(), row.end(), first.begin()));
  }
  for (std::size_t i = 0; i < ds.grid.nx; ++i) CHECK(first[i] == ds.profile(ds.grid.x(i)));
}

TEST_CASE("tiny dataset matches hand-evaluated formula") {
  const std::vector<double> mu{1.0};
  const auto ds = generate_dataset(GridSpec{4, 0.0, 1.0, 2, 0.1}, InitialProfile{}, mu);
  // f(i/3 - 0.1), 30-digit references
  const double expected[] = {2.07553748710297351670, 0.0243743410971570908522, 6.39361822717470837958e-14,
                             3.74603671412298724574e-35};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ds.snapshots.at({0, 1, i}) == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("generation is deterministic and validates input") {
  const std::vector<double> mu{0.8, 1.1};
  const GridSpec g{32, 0.0, 1.0, 10, 1.0};
  CHECK(generate_dataset(g, {}, mu).snapshots == generate_dataset(g, {}, mu).snapshots);
  CHECK_THROWS_AS(generate_dataset(g, {}, std::vector<double>{}), InvalidArgument);
  CHECK_THROWS_AS(generate_dataset(g, {}, std::vector<double>{-1.0}), InvalidArgument);
  CHECK_THROWS_AS(generate_dataset(GridSpec{1, 0.0, 1.0, 10, 1.0}, {}, mu), InvalidArgument);
  CHECK_THROWS_AS(generate_dataset(g, InitialProfile{0.0, 0.0}, mu), InvalidArgument);
}

TEST_CASE("central-difference PDE residual converges at second order") {
  // Pulse kept away from the boundaries; residual / (dx^2 + dt^2) must stay bounded.
  const InitialProfile p{5e-3, 0.3};
  const double mu = 1.0;
  std::vector<double> constants;
  std::vector<double> residuals;
  for (std::size_t n : {201, 401, 801}) {
    const GridSpec g{n, 0.0, 1.0, n, 0.2};
    const auto ds = generate_dataset(g, p, std::vector<double>{mu});
    double worst = 0.0;
    for (std::size_t j = 1; j + 1 < g.nt; ++j) {
      for (std::size_t i = 1; i + 1 < g.nx; ++i) {
        const double ut = (ds.snapshots.at({0, j + 1, i}) - ds.snapshots.at({0, j - 1, i})) / (2 * g.dt());
        const double ux = (ds.snapshots.at({0, j, i + 1}) - ds.snapshots.at({0, j, i - 1})) / (2 * g.dx());
        worst = std::max(worst, std::abs(ut + mu * ux));
      }
    }
    residuals.push_back(worst);
    constants.push_back(worst / (g.dx() * g.dx() + g.dt() * g.dt()));
  }
  for (std::size_t k = 1; k < residuals.size(); ++k) {
    const double order = std::log2(residuals[k - 1] / residuals[k]);
    CHECK(order > 1.8);
    CHECK(constants[k] <= constants[k - 1] * 1.1);
  }
}

TEST_CASE("dataset round-trips bit-exactly") {
  const auto dir = testing::scratch_dir("dataset_roundtrip");
  const auto mu = make_parameter_grid(0.775, 1.25, 20).mu_train;
  const auto ds = generate_dataset(GridSpec{}, InitialProfile{5e-3, 0.1}, mu);
  write_dataset(ds, dir);
  const auto back = read_dataset(dir);
  CHECK(back.snapshots == ds.snapshots);
  CHECK(back.mu_values == ds.mu_values);
  CHECK(back.grid.nx == ds.grid.nx);
  CHECK(back.grid.nt == ds.grid.nt);
  CHECK(back.grid.x0 == ds.grid.x0);
  CHECK(back.grid.x1 == ds.grid.x1);
  CHECK(back.grid.t_final == ds.grid.t_final);
  CHECK(back.profile.sigma_g == ds.profile.sigma_g);
  CHECK(back.profile.x_center == ds.profile.x_center);
  CHECK(std::filesystem::file_size(dir / "snapshots.bin") == 20u * 200u * 256u * 8u);

  const auto meta = io::read_json(dir / "meta.json");
  CHECK(meta["dtype"] == "f64le");
  CHECK(meta["layout"] == "mu,t,x");
  CHECK(meta["version"] == 1);
}

TEST_CASE("snapshots.bin is little-endian C-order") {
  const auto dir = testing::scratch_dir("dataset_layout");
  const auto ds = generate_dataset(GridSpec{3, 0.0, 1.0, 2, 0.5}, InitialProfile{0.01, 0.4}, std::vector<double>{1.0, 2.0});
  write_dataset(ds, dir);
  const std::string bytes = testing::slurp(dir / "snapshots.bin");
  REQUIRE(bytes.size() == 12 * 8);
  // element [1][1][2]: mu=2, t=0.5, x=1
  const std::size_t k = (1 * 2 + 1) * 3 + 2;
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[8 * k + b]);
  CHECK(std::bit_cast<double>(bits) == exact_solution(2.0, 1.0, 0.5, ds.profile));
}

TEST_CASE("corrupt dataset directories are rejected") {
  const auto dir = testing::scratch_dir("dataset_corrupt");
  const auto ds = generate_dataset(GridSpec{16, 0.0, 1.0, 4, 1.0}, {}, std::vector<double>{1.0});
  write_dataset(ds, dir);

  SUBCASE("truncated snapshots") {
    std::filesystem::resize_file(dir / "snapshots.bin", 16 * 4 * 8 - 8);
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
  }
  SUBCASE("unknown version") {
    auto meta = io::read_json(dir / "meta.json");
    meta["version"] = 99;
    io::write_json(dir / "meta.json", meta);
    CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("version"), FormatError);
  }
  SUBCASE("metadata shape disagrees") {
    auto meta = io::read_json(dir / "meta.json");
    meta["nx"] = 17;
    io::write_json(dir / "meta.json", meta);
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(read_dataset(dir / "nope"), IoError);
  }
}

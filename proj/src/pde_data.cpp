#include "abcran/pde_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "abcran/binary_io.hpp"
#include "abcran/errors.hpp"

namespace abcran::data {

void GridSpec::validate() const {
  if (nx < 2) throw InvalidArgument("grid needs nx >= 2");
  if (nt < 2) throw InvalidArgument("grid needs nt >= 2");
  if (!(x1 > x0)) throw InvalidArgument("grid needs x1 > x0");
  if (!(t_final > 0.0)) throw InvalidArgument("grid needs t_final > 0");
}

void InitialProfile::validate() const {
  if (!(sigma_g > 0.0) || !std::isfinite(sigma_g)) throw InvalidArgument("initial profile needs sigma_g > 0");
  if (!std::isfinite(x_center)) throw InvalidArgument("initial profile center must be finite");
}

double InitialProfile::operator()(double x) const {
  const double d = x - x_center;
  return std::exp(-d * d / (2.0 * sigma_g)) / std::sqrt(2.0 * std::numbers::pi * sigma_g);
}

std::span<const double> WaveDataset::profile_at(std::size_t m, std::size_t j) const {
  const std::size_t nx = grid.nx;
  return snapshots.data().subspan((m * grid.nt + j) * nx, nx);
}

double WaveDataset::max_abs() const {
  double mx = 0.0;
  for (double v : snapshots.data()) mx = std::max(mx, std::abs(v));
  return mx;
}

double exact_solution(double mu, double x, double t, const InitialProfile& profile) {
  return profile(x - mu * t);
}

ParameterGrid make_parameter_grid(double mu_min, double mu_max, std::size_t n_train) {
  if (n_train < 2) throw InvalidArgument("parameter grid needs at least 2 training values");
  if (!(mu_max > mu_min)) throw InvalidArgument("parameter grid needs mu_max > mu_min");
  ParameterGrid g;
  g.mu_train.resize(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    g.mu_train[i] = mu_min + static_cast<double>(i) * (mu_max - mu_min) / static_cast<double>(n_train - 1);
  }
  g.mu_train.back() = mu_max;
  for (std::size_t i = 0; i + 1 < n_train; ++i) g.mu_test.push_back((g.mu_train[i] + g.mu_train[i + 1]) / 2.0);
  return g;
}

WaveDataset generate_dataset(const GridSpec& grid, const InitialProfile& profile, std::span<const double> mu_values) {
  grid.validate();
  profile.validate();
  if (mu_values.empty()) throw InvalidArgument("dataset needs at least one mu value");
  for (double mu : mu_values) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidArgument("wave speeds must be positive and finite");
  }
  WaveDataset ds{grid, profile, {mu_values.begin(), mu_values.end()}, Tensor({mu_values.size(), grid.nt, grid.nx})};
  auto out = ds.snapshots.data();
  std::size_t k = 0;
  for (double mu : mu_values) {
    for (std::size_t j = 0; j < grid.nt; ++j) {
      const double t = grid.t(j);
      for (std::size_t i = 0; i < grid.nx; ++i) out[k++] = exact_solution(mu, grid.x(i), t, profile);
    }
  }
  return ds;
}

void write_dataset(const WaveDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta = {
      {"version", kDatasetFormatVersion},
      {"nx", ds.grid.nx},
      {"x0", ds.grid.x0},
      {"x1", ds.grid.x1},
      {"nt", ds.grid.nt},
      {"t_final", ds.grid.t_final},
      {"sigma_g", ds.profile.sigma_g},
      {"x_center", ds.profile.x_center},
      {"mu", ds.mu_values},
      {"dtype", "f64le"},
      {"layout", "mu,t,x"},
  };
  io::write_json(dir / "meta.json", meta);
  io::write_f64le(dir / "snapshots.bin", ds.snapshots.data());
}

WaveDataset read_dataset(const std::filesystem::path& dir) {
  const auto meta = io::read_json(dir / "meta.json");
  WaveDataset ds;
  try {
    const int version = meta.at("version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw FormatError("unsupported dataset format version " + std::to_string(version) + " (expected " +
                        std::to_string(kDatasetFormatVersion) + ")");
    }
    if (meta.at("dtype").get<std::string>() != "f64le" || meta.at("layout").get<std::string>() != "mu,t,x") {
      throw FormatError("unsupported dataset dtype/layout");
    }
    ds.grid.nx = meta.at("nx").get<std::size_t>();
    ds.grid.x0 = meta.at("x0").get<double>();
    ds.grid.x1 = meta.at("x1").get<double>();
    ds.grid.nt = meta.at("nt").get<std::size_t>();
    ds.grid.t_final = meta.at("t_final").get<double>();
    ds.profile.sigma_g = meta.at("sigma_g").get<double>();
    ds.profile.x_center = meta.at("x_center").get<double>();
    ds.mu_values = meta.at("mu").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "meta.json").string() + ": " + e.what());
  }
  try {
    ds.grid.validate();
    ds.profile.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("dataset metadata invalid: ") + e.what());
  }
  if (ds.mu_values.empty()) throw FormatError("dataset metadata lists no mu values");

  auto values = io::read_f64le(dir / "snapshots.bin");
  const std::size_t expected = ds.mu_values.size() * ds.grid.nt * ds.grid.nx;
  if (values.size() != expected) {
    throw FormatError("snapshots.bin holds " + std::to_string(values.size()) + " values, metadata implies " +
                      std::to_string(expected));
  }
  ds.snapshots = Tensor({ds.mu_values.size(), ds.grid.nt, ds.grid.nx}, std::move(values));
  if (!ds.snapshots.all_finite()) throw FormatError("snapshots.bin contains non-finite values");
  return ds;
}

WaveDataset select_mu(const WaveDataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("select_mu: no indices");
  const std::size_t block = ds.grid.nt * ds.grid.nx;
  WaveDataset out{ds.grid, ds.profile, {}, Tensor({indices.size(), ds.grid.nt, ds.grid.nx})};
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t m = indices[k];
    if (m >= ds.n_mu()) throw InvalidArgument("select_mu: index out of range");
    out.mu_values.push_back(ds.mu_values[m]);
    std::copy_n(ds.snapshots.data().begin() + m * block, block, out.snapshots.data().begin() + k * block);
  }
  return out;
}

}  // namespace abcran::data

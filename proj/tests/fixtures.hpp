#pragma once

#include "abcran/model.hpp"
#include "abcran/pde_data.hpp"

namespace testing {

inline abcran::model::ArchConfig tiny_arch() {
  abcran::model::ArchConfig c;
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

/// 4 mu instances on a 16-point grid, 12 snapshots each.
inline abcran::data::WaveDataset tiny_dataset(std::size_t n_mu = 4, std::size_t nt = 12) {
  abcran::data::GridSpec g;
  g.nx = 16;
  g.nt = nt;
  g.t_final = 0.5;
  abcran::data::InitialProfile f;
  f.sigma_g = 0.01;
  f.x_center = 0.2;
  const auto grid = abcran::data::make_parameter_grid(0.775, 1.25, n_mu);
  return abcran::data::generate_dataset(g, f, grid.mu_train);
}

}  // namespace testing

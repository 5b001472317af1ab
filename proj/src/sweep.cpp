#include "abcran/sweep.hpp"

#include <atomic>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "abcran/errors.hpp"

namespace abcran::sweep {

void Budget::validate() const {
  if (initial_epochs == 0) throw InvalidArgument("initial_epochs must be positive");
  if (growth == 0) throw InvalidArgument("growth must be positive");
  if (jobs == 0) throw InvalidArgument("jobs must be positive");
}

std::string Result::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "rung,candidate,alpha,beta,epochs,score,promoted\n";
  for (const auto& r : rows) {
    os << r.rung << ',' << r.candidate << ',' << r.weights.alpha << ',' << r.weights.beta << ',' << r.epochs << ','
       << r.score << ',' << (r.promoted ? 1 : 0) << '\n';
  }
  return os.str();
}

Result successive_halving(std::span<const decomp::LossWeights> grid, const Budget& budget,
                          const Objective& objective) {
  budget.validate();
  if (grid.empty()) throw InvalidArgument("empty sweep grid");
  for (const auto& w : grid) w.validate();

  Result result;
  std::vector<std::size_t> alive(grid.size());
  std::iota(alive.begin(), alive.end(), 0);
  std::size_t epochs = budget.initial_epochs;

  for (std::size_t rung = 0;; ++rung) {
    std::vector<double> scores(alive.size());
    std::vector<std::exception_ptr> errors(alive.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < alive.size(); i = next++) {
        try {
          scores[i] = objective(grid[alive[i]], epochs);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t n_threads = std::min(budget.jobs, alive.size());
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    result.runs += alive.size();

    std::vector<std::size_t> order(alive.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    const std::size_t keep = alive.size() == 1 ? 1 : (alive.size() + 1) / 2;

    const std::size_t first_row = result.rows.size();
    for (std::size_t i = 0; i < alive.size(); ++i) {
      result.rows.push_back({rung, alive[i], grid[alive[i]], epochs, scores[i], false});
    }
    std::vector<std::size_t> survivors;
    for (std::size_t k = 0; k < keep; ++k) {
      survivors.push_back(alive[order[k]]);
      if (alive.size() > 1) result.rows[first_row + order[k]].promoted = true;
    }
    if (alive.size() == 1) {
      result.best = alive.front();
      result.best_weights = grid[result.best];
      result.best_score = scores.front();
      break;
    }
    alive = std::move(survivors);
    epochs *= budget.growth;
  }
  return result;
}

std::vector<decomp::LossWeights> make_grid(std::span<const double> alphas, std::span<const double> betas) {
  std::vector<decomp::LossWeights> out;
  for (double a : alphas) {
    for (double b : betas) {
      decomp::LossWeights w{a, b};
      w.validate();
      out.push_back(w);
    }
  }
  return out;
}

Objective fit_objective(const model::ArchConfig& arch, std::uint64_t model_seed, const data::WaveDataset& dataset,
                        const train::TrainConfig& base) {
  return [arch, model_seed, &dataset, base](const decomp::LossWeights& w, std::size_t epochs) {
    train::TrainConfig cfg = base;
    cfg.weights = w;
    cfg.max_epochs = epochs;
    model::AbcranModel m(arch, model_seed);
    const auto report = train::fit(m, dataset, cfg);
    return report.best().val_tau;
  };
}

}  // namespace abcran::sweep

#include "winstack/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "winstack/rng.hpp"

namespace winstack {

double Attribution::efficiency_gap() const {
  double s = base_value;
  for (double v : phi) s += v;
  return std::abs(s - model_output);
}

namespace {

void check_inputs(const GbtModel& model, std::span<const double> instance,
                  const std::vector<std::vector<double>>& background) {
  if (static_cast<int>(instance.size()) != model.input_len) {
    throw std::invalid_argument("instance length does not match model input length");
  }
  if (background.empty()) throw std::invalid_argument("background set must be non-empty");
  for (const auto& b : background) {
    if (b.size() != instance.size()) {
      throw std::invalid_argument("background rows must match the instance length");
    }
  }
}

}  // namespace

Attribution shapley_exact(const GbtModel& model, std::span<const double> instance,
                          const std::vector<std::vector<double>>& background,
                          const std::string& instance_id) {
  check_inputs(model, instance, background);
  const int m = static_cast<int>(instance.size());
  if (m > 15) {
    throw std::invalid_argument("exact Shapley enumerates 2^m coalitions; " + std::to_string(m) +
                                " features is too many, use shapley_sampled");
  }

  // v(S) = mean over background b of f(instance on S, b elsewhere).
  const std::size_t n_subsets = std::size_t{1} << m;
  std::vector<double> v(n_subsets, 0.0);
  std::vector<double> composite(instance.size());
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    double acc = 0.0;
    for (const auto& b : background) {
      for (int j = 0; j < m; ++j) {
        composite[static_cast<std::size_t>(j)] =
            (mask >> j) & 1 ? instance[static_cast<std::size_t>(j)] : b[static_cast<std::size_t>(j)];
      }
      acc += predict_gbt(model, composite);
    }
    v[mask] = acc / static_cast<double>(background.size());
  }

  // phi_j = sum over S not containing j of |S|!(m-|S|-1)!/m! * (v(S+j) - v(S)).
  std::vector<double> coalition_weight(static_cast<std::size_t>(m), 0.0);
  {
    std::vector<double> log_fact(static_cast<std::size_t>(m) + 1, 0.0);
    for (int i = 1; i <= m; ++i) {
      log_fact[static_cast<std::size_t>(i)] = log_fact[static_cast<std::size_t>(i - 1)] + std::log(i);
    }
    for (int s = 0; s < m; ++s) {
      coalition_weight[static_cast<std::size_t>(s)] =
          std::exp(log_fact[static_cast<std::size_t>(s)] +
                   log_fact[static_cast<std::size_t>(m - s - 1)] - log_fact[static_cast<std::size_t>(m)]);
    }
  }

  Attribution attr;
  attr.instance_id = instance_id;
  attr.input.assign(instance.begin(), instance.end());
  attr.phi.assign(static_cast<std::size_t>(m), 0.0);
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    const int size = static_cast<int>(std::popcount(static_cast<unsigned long long>(mask)));
    for (int j = 0; j < m; ++j) {
      if ((mask >> j) & 1) continue;
      attr.phi[static_cast<std::size_t>(j)] +=
          coalition_weight[static_cast<std::size_t>(size)] * (v[mask | (std::size_t{1} << j)] - v[mask]);
    }
  }
  attr.base_value = v[0];
  attr.model_output = v[n_subsets - 1];
  return attr;
}

Attribution shapley_sampled(const GbtModel& model, std::span<const double> instance,
                            const std::vector<std::vector<double>>& background, int permutations,
                            std::uint64_t seed, const std::string& instance_id) {
  check_inputs(model, instance, background);
  if (permutations < 1) throw std::invalid_argument("permutations must be >= 1");
  const std::size_t m = instance.size();

  Rng rng(derive_seed(seed, "shapley/" + instance_id));
  std::vector<double> sum(m, 0.0), sum_sq(m, 0.0);
  double base_sum = 0.0;
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> composite(m);

  for (int it = 0; it < permutations; ++it) {
    const auto& b = background[rng.below(background.size())];
    rng.shuffle(order);
    std::copy(b.begin(), b.end(), composite.begin());
    double prev = predict_gbt(model, composite);
    base_sum += prev;
    for (int j : order) {
      composite[static_cast<std::size_t>(j)] = instance[static_cast<std::size_t>(j)];
      const double cur = predict_gbt(model, composite);
      const double contribution = cur - prev;
      sum[static_cast<std::size_t>(j)] += contribution;
      sum_sq[static_cast<std::size_t>(j)] += contribution * contribution;
      prev = cur;
    }
  }

  Attribution attr;
  attr.instance_id = instance_id;
  attr.input.assign(instance.begin(), instance.end());
  attr.phi.assign(m, 0.0);
  attr.std_error.assign(m, 0.0);
  const double n = static_cast<double>(permutations);
  for (std::size_t j = 0; j < m; ++j) {
    attr.phi[j] = sum[j] / n;
    if (permutations > 1) {
      const double var = std::max(0.0, (sum_sq[j] - sum[j] * sum[j] / n) / (n - 1.0));
      attr.std_error[j] = std::sqrt(var / n);
    }
  }
  // Mean f(b) over the sampled rows keeps efficiency exact per estimate.
  attr.base_value = base_sum / n;
  attr.model_output = predict_gbt(model, instance);
  return attr;
}

AttributionSummary attribution_summary(const std::vector<Attribution>& attributions) {
  if (attributions.empty()) throw std::invalid_argument("no attributions to summarise");
  const std::size_t m = attributions[0].phi.size();
  for (const auto& a : attributions) {
    if (a.phi.size() != m || a.input.size() != m) {
      throw std::invalid_argument("attributions mix encodings (unequal input lengths)");
    }
  }

  AttributionSummary summary;
  summary.positions.resize(m);
  summary.scatter.resize(m);
  std::vector<double> sum_high(m, 0.0), sum_sq_high(m, 0.0), sum_low(m, 0.0), sum_sq_low(m, 0.0);
  for (const auto& a : attributions) {
    for (std::size_t j = 0; j < m; ++j) {
      auto& pos = summary.positions[j];
      pos.position = static_cast<int>(j);
      pos.n++;
      pos.mean_abs_phi += std::abs(a.phi[j]);
      summary.scatter[j].emplace_back(a.input[j], a.phi[j]);
      if (a.input[j] >= 0.5) {
        pos.n_high++;
        sum_high[j] += a.phi[j];
        sum_sq_high[j] += a.phi[j] * a.phi[j];
      } else {
        pos.n_low++;
        sum_low[j] += a.phi[j];
        sum_sq_low[j] += a.phi[j] * a.phi[j];
      }
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    auto& pos = summary.positions[j];
    pos.mean_abs_phi /= static_cast<double>(pos.n);
    if (pos.n_high > 1) {
      const double n = static_cast<double>(pos.n_high);
      pos.var_phi_high = std::max(0.0, (sum_sq_high[j] - sum_high[j] * sum_high[j] / n) / (n - 1.0));
    }
    if (pos.n_low > 1) {
      const double n = static_cast<double>(pos.n_low);
      pos.var_phi_low = std::max(0.0, (sum_sq_low[j] - sum_low[j] * sum_low[j] / n) / (n - 1.0));
    }
  }

  summary.ranking.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    summary.ranking.emplace_back(static_cast<int>(j), summary.positions[j].mean_abs_phi);
  }
  std::stable_sort(summary.ranking.begin(), summary.ranking.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t r = 0; r < summary.ranking.size(); ++r) {
    summary.positions[static_cast<std::size_t>(summary.ranking[r].first)].rank =
        static_cast<int>(r) + 1;
  }
  return summary;
}

}  // namespace winstack

#include "cmiprune/cutoff.hpp"
#include "cmiprune/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cmiprune {
namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr int kMaxLloydIterations = 100;
constexpr double kLloydTolerance = 1e-9;

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int nearest(double x, std::span<const double> centers) {
  int best = 0;
  double best_d = std::abs(x - centers[0]);
  for (std::size_t j = 1; j < centers.size(); ++j) {
    const double d = std::abs(x - centers[j]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

/// k-means++ seeding. Returns fewer than k centers when the data has fewer
/// distinct values than k.
std::vector<double> seed_centers(std::span<const double> values, int k, std::mt19937_64& rng) {
  std::vector<double> centers;
  const std::size_t first =
      std::min(values.size() - 1, static_cast<std::size_t>(unit_uniform(rng) * values.size()));
  centers.push_back(values[first]);
  std::vector<double> weight(values.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d = values[i] - centers[static_cast<std::size_t>(nearest(values[i], centers))];
      weight[i] = d * d;
      total += weight[i];
    }
    if (!(total > 0.0)) break;
    double target = unit_uniform(rng) * total;
    std::size_t pick = values.size() - 1;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (weight[i] <= 0.0) continue;
      if (target < weight[i]) {
        pick = i;
        break;
      }
      target -= weight[i];
    }
    if (weight[pick] <= 0.0) break;
    centers.push_back(values[pick]);
  }
  return centers;
}

/// Lloyd iterations; empty clusters keep their previous center.
std::vector<int> lloyd(std::span<const double> values, std::vector<double>& centers) {
  std::vector<int> assignment(values.size(), 0);
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    for (std::size_t i = 0; i < values.size(); ++i) assignment[i] = nearest(values[i], centers);
    std::vector<double> sum(centers.size(), 0.0);
    std::vector<int> count(centers.size(), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum[static_cast<std::size_t>(assignment[i])] += values[i];
      ++count[static_cast<std::size_t>(assignment[i])];
    }
    double shift = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      if (count[j] == 0) continue;
      const double updated = sum[j] / count[j];
      shift = std::max(shift, std::abs(updated - centers[j]));
      centers[j] = updated;
    }
    if (shift <= kLloydTolerance) break;
  }
  for (std::size_t i = 0; i < values.size(); ++i) assignment[i] = nearest(values[i], centers);
  return assignment;
}

/// Drops centers that own no points and renumbers the assignment.
void compact(std::vector<double>& centers, std::vector<int>& assignment) {
  std::vector<bool> used(centers.size(), false);
  for (int a : assignment) used[static_cast<std::size_t>(a)] = true;
  std::vector<int> remap(centers.size(), -1);
  std::vector<double> kept;
  for (std::size_t j = 0; j < centers.size(); ++j) {
    if (!used[j]) continue;
    remap[j] = static_cast<int>(kept.size());
    kept.push_back(centers[j]);
  }
  for (int& a : assignment) a = remap[static_cast<std::size_t>(a)];
  centers = std::move(kept);
}

struct SplitProposal {
  std::size_t cluster = 0;
  double gain = 0.0;
  double low = 0.0;
  double high = 0.0;
};

}  // namespace

double bic_1d(std::span<const double> values, std::span<const int> assignment,
              std::span<const double> centers, int k) {
  const double r = static_cast<double>(values.size());
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  double sq = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto j = static_cast<std::size_t>(assignment[i]);
    const double d = values[i] - centers[j];
    sq += d * d;
    ++count[j];
  }
  // One spherical variance shared by all clusters, unbiased in R - k.
  const double dof = r - static_cast<double>(k);
  const double variance = std::max(dof > 0.0 ? sq / dof : 0.0, kVarianceFloor);
  double log_likelihood = -0.5 * r * std::log(2.0 * std::numbers::pi * variance) - 0.5 * sq / variance;
  for (int c : count) {
    if (c > 0) log_likelihood += c * std::log(c / r);
  }
  const double params = 2.0 * k;
  return log_likelihood - 0.5 * params * std::log(r);
}

Clustering xmeans_1d(std::span<const double> values, int k_init, int k_max, std::uint64_t seed) {
  Clustering out;
  if (values.empty()) return out;
  k_max = std::max(1, k_max);
  k_init = std::clamp(k_init, 1, k_max);
  std::mt19937_64 rng(seed);

  std::vector<double> centers = seed_centers(values, k_init, rng);
  std::vector<int> assignment = lloyd(values, centers);
  compact(centers, assignment);

  while (static_cast<int>(centers.size()) < k_max) {
    std::vector<SplitProposal> proposals;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      std::vector<double> members;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (assignment[i] == static_cast<int>(j)) members.push_back(values[i]);
      }
      if (members.size() < 3) continue;

      const std::vector<int> parent_assignment(members.size(), 0);
      const double parent_center[] = {centers[j]};
      const double parent = bic_1d(members, parent_assignment, parent_center, 1);

      std::vector<double> child_centers = seed_centers(members, 2, rng);
      if (child_centers.size() < 2) continue;
      std::vector<int> child_assignment = lloyd(members, child_centers);
      compact(child_centers, child_assignment);
      if (child_centers.size() < 2) continue;
      const double children = bic_1d(members, child_assignment, child_centers, 2);
      if (children > parent) {
        proposals.push_back({j, children - parent, std::min(child_centers[0], child_centers[1]),
                             std::max(child_centers[0], child_centers[1])});
      }
    }
    if (proposals.empty()) break;

    // Keep the most valuable splits when the budget cannot take all of them.
    std::stable_sort(proposals.begin(), proposals.end(),
                     [](const SplitProposal& a, const SplitProposal& b) { return a.gain > b.gain; });
    const std::size_t budget = static_cast<std::size_t>(k_max) - centers.size();
    if (proposals.size() > budget) proposals.resize(budget);

    std::vector<double> next;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      auto it = std::find_if(proposals.begin(), proposals.end(),
                             [j](const SplitProposal& p) { return p.cluster == j; });
      if (it == proposals.end()) {
        next.push_back(centers[j]);
      } else {
        next.push_back(it->low);
        next.push_back(it->high);
      }
    }
    centers = std::move(next);
    assignment = lloyd(values, centers);
    compact(centers, assignment);
  }

  out.centers = centers;
  out.assignment = assignment;
  out.variances.assign(centers.size(), 0.0);
  std::vector<int> count(centers.size(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto j = static_cast<std::size_t>(assignment[i]);
    const double d = values[i] - centers[j];
    out.variances[j] += d * d;
    ++count[j];
  }
  for (std::size_t j = 0; j < centers.size(); ++j) {
    out.variances[j] /= count[j];
    if (out.variances[j] < kVarianceFloor) {
      out.variances[j] = kVarianceFloor;
      out.degenerate_variance = true;
    }
  }
  if (out.degenerate_variance) {
    spdlog::debug("DegenerateVariance: X-Means cluster variance floored at 1e-12");
  }
  return out;
}

}  // namespace cmiprune

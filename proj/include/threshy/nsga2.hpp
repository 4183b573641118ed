#pragma once

// Generic NSGA-II building blocks over minimization objective vectors and real-coded
// genomes bounded to [0, 1]. Nothing in here knows about thresholds or datasets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace threshy::nsga2 {

template <std::size_t M>
using Objectives = std::array<double, M>;

using Rng = std::mt19937_64;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return std::min(i, n - 1);
}

/// a dominates b: no worse everywhere, strictly better somewhere.
template <std::size_t M>
bool dominates(const Objectives<M>& a, const Objectives<M>& b) {
  bool strictly = false;
  for (std::size_t k = 0; k < M; ++k) {
    if (a[k] > b[k]) return false;
    if (a[k] < b[k]) strictly = true;
  }
  return strictly;
}

/// Deb's fast non-dominated sort. Returns the rank of each vector (0 = non-dominated).
template <std::size_t M>
std::vector<std::size_t> fast_nondominated_sort(std::span<const Objectives<M>> points) {
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> dominated_by(n);
  std::vector<std::size_t> domination_count(n, 0);
  std::vector<std::size_t> rank(n, 0);
  std::vector<std::size_t> current;

  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (dominates(points[p], points[q])) {
        dominated_by[p].push_back(q);
        ++domination_count[q];
      } else if (dominates(points[q], points[p])) {
        dominated_by[q].push_back(p);
        ++domination_count[p];
      }
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (domination_count[p] == 0) current.push_back(p);
  }
  std::size_t level = 0;
  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t p : current) {
      rank[p] = level;
      for (std::size_t q : dominated_by[p]) {
        if (--domination_count[q] == 0) next.push_back(q);
      }
    }
    current = std::move(next);
    ++level;
  }
  return rank;
}

/// Groups indices by rank, each group in ascending index order.
inline std::vector<std::vector<std::size_t>> fronts_from_ranks(std::span<const std::size_t> ranks) {
  std::vector<std::vector<std::size_t>> fronts;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] >= fronts.size()) fronts.resize(ranks[i] + 1);
    fronts[ranks[i]].push_back(i);
  }
  return fronts;
}

/// Crowding distance within one front. Per objective the extreme members get +inf and the
/// others accumulate (next - prev) / range; an objective with zero range adds nothing.
template <std::size_t M>
std::vector<double> crowding_distance(std::span<const Objectives<M>> front) {
  const std::size_t n = front.size();
  std::vector<double> distance(n, 0.0);
  if (n <= 2) {
    std::fill(distance.begin(), distance.end(), kInfinity);
    return distance;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < M; ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return front[a][k] < front[b][k]; });
    distance[order.front()] = kInfinity;
    distance[order.back()] = kInfinity;
    const double range = front[order.back()][k] - front[order.front()][k];
    if (range <= 0.0) continue;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      distance[order[i]] += (front[order[i + 1]][k] - front[order[i - 1]][k]) / range;
    }
  }
  return distance;
}

/// Crowded-comparison: lower rank wins, then larger crowding distance.
inline bool crowded_less(std::size_t rank_a, double crowd_a, std::size_t rank_b, double crowd_b) {
  if (rank_a != rank_b) return rank_a < rank_b;
  return crowd_a > crowd_b;
}

struct SbxParams {
  double probability = 0.9;
  double distribution_index = 15.0;
};

struct MutationParams {
  double probability = 0.1;  // per gene
  double distribution_index = 20.0;
};

/// Spread factor of simulated-binary crossover for one draw u in [0, 1).
inline double sbx_beta(double u, double eta) {
  return u <= 0.5 ? std::pow(2.0 * u, 1.0 / (eta + 1.0))
                  : std::pow(1.0 / (2.0 * (1.0 - u)), 1.0 / (eta + 1.0));
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

/// Simulated-binary crossover applied gene by gene. Each active gene recombines with the
/// given probability; the two children are symmetric about the parents' mean before clamping.
/// `active` (optional) marks which genes may change; inactive genes are copied.
inline std::pair<std::vector<double>, std::vector<double>> sbx_crossover(
    std::span<const double> parent_a, std::span<const double> parent_b, const SbxParams& params,
    Rng& rng, std::span<const bool> active = {}) {
  std::vector<double> child_a(parent_a.begin(), parent_a.end());
  std::vector<double> child_b(parent_b.begin(), parent_b.end());
  for (std::size_t i = 0; i < child_a.size(); ++i) {
    if (!active.empty() && !active[i]) continue;
    if (uniform01(rng) >= params.probability) continue;
    const double u = uniform01(rng);
    const double beta = sbx_beta(u, params.distribution_index);
    const double a = parent_a[i];
    const double b = parent_b[i];
    child_a[i] = clamp01(0.5 * ((1.0 + beta) * a + (1.0 - beta) * b));
    child_b[i] = clamp01(0.5 * ((1.0 - beta) * a + (1.0 + beta) * b));
  }
  return {std::move(child_a), std::move(child_b)};
}

/// Bounded polynomial mutation against [0, 1], result clamped.
inline double polynomial_mutate_gene(double x, double eta, Rng& rng) {
  const double u = uniform01(rng);
  const double power = 1.0 / (eta + 1.0);
  double delta = 0.0;
  if (u < 0.5) {
    const double xy = 1.0 - x;  // 1 - delta1, delta1 = (x - lower) / range
    const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(xy, eta + 1.0);
    delta = std::pow(val, power) - 1.0;
  } else {
    const double xy = x;  // 1 - delta2, delta2 = (upper - x) / range
    const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(xy, eta + 1.0);
    delta = 1.0 - std::pow(val, power);
  }
  return clamp01(x + delta);
}

inline std::vector<double> polynomial_mutation(std::span<const double> genes,
                                               const MutationParams& params, Rng& rng,
                                               std::span<const bool> active = {}) {
  std::vector<double> out(genes.begin(), genes.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!active.empty() && !active[i]) continue;
    if (uniform01(rng) >= params.probability) continue;
    out[i] = polynomial_mutate_gene(out[i], params.distribution_index, rng);
  }
  return out;
}

/// Area dominated by 2-D points relative to `reference` (minimization).
inline double hypervolume_2d(std::vector<std::array<double, 2>> points,
                             const std::array<double, 2>& reference) {
  std::erase_if(points, [&](const auto& p) { return !(p[0] < reference[0] && p[1] < reference[1]); });
  std::sort(points.begin(), points.end());
  double area = 0.0;
  double best = reference[1];
  for (const auto& p : points) {
    if (p[1] < best) {
      area += (reference[0] - p[0]) * (best - p[1]);
      best = p[1];
    }
  }
  return area;
}

/// Exact 3-D hypervolume by slicing along the first objective.
inline double hypervolume_3d(std::span<const Objectives<3>> points, const Objectives<3>& reference) {
  std::vector<Objectives<3>> inside;
  for (const auto& p : points) {
    if (p[0] < reference[0] && p[1] < reference[1] && p[2] < reference[2]) inside.push_back(p);
  }
  std::sort(inside.begin(), inside.end());
  double volume = 0.0;
  std::vector<std::array<double, 2>> slice;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    slice.push_back({inside[i][1], inside[i][2]});
    const double next = i + 1 < inside.size() ? inside[i + 1][0] : reference[0];
    const double depth = next - inside[i][0];
    if (depth > 0.0) volume += depth * hypervolume_2d(slice, {reference[1], reference[2]});
  }
  return volume;
}

}  // namespace threshy::nsga2

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <vector>

#include "threshy/costs.hpp"
#include "threshy/dataset.hpp"
#include "threshy/metrics.hpp"
#include "threshy/nsga2.hpp"
#include "threshy/thresholding.hpp"
#include "threshy/version.hpp"

namespace threshy {

struct OptimizerSettings {
  std::size_t population_size = 100;
  std::size_t generations = 50;
  double crossover_probability = 0.9;
  double crossover_distribution_index = 15.0;
  std::optional<double> mutation_probability_per_gene;  // unset: 1 / |vocabulary|
  double mutation_distribution_index = 20.0;
  std::uint64_t rng_seed = 42;

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::validation, msg); };
    if (population_size < 4 || population_size % 2 != 0) {
      fail("population size must be an even number >= 4 (got " + std::to_string(population_size) +
           ")");
    }
    if (generations < 1) fail("generations must be >= 1");
    auto probability = [&](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) fail(std::string(what) + " must be in [0, 1]");
    };
    probability(crossover_probability, "crossover probability");
    if (mutation_probability_per_gene) {
      probability(*mutation_probability_per_gene, "mutation probability");
    }
    if (!(crossover_distribution_index > 0.0) || !std::isfinite(crossover_distribution_index)) {
      fail("crossover distribution index must be > 0");
    }
    if (!(mutation_distribution_index > 0.0) || !std::isfinite(mutation_distribution_index)) {
      fail("mutation distribution index must be > 0");
    }
  }

  [[nodiscard]] double mutation_probability(std::size_t vocabulary_size) const {
    return mutation_probability_per_gene.value_or(1.0 / static_cast<double>(vocabulary_size));
  }

  friend bool operator==(const OptimizerSettings&, const OptimizerSettings&) = default;
};

/// (-TP, FP, MP), all minimized.
using ObjectiveVector = nsga2::Objectives<3>;

struct ParetoSolution {
  std::vector<double> thresholds;  // one gene per vocabulary label
  ObjectiveVector objectives{};
  std::size_t rank = 0;
  double crowding = 0.0;

  friend bool operator==(const ParetoSolution&, const ParetoSolution&) = default;
};

struct OptimizationProvenance {
  OptimizerSettings settings;
  std::string dataset_digest;
  std::optional<std::string> cost_schedule_digest;
  std::string engine_version = kEngineVersion;

  friend bool operator==(const OptimizationProvenance&, const OptimizationProvenance&) = default;
};

struct OptimizationResult {
  std::vector<std::string> labels;  // gene order
  std::vector<ParetoSolution> front;
  std::size_t recommended_index = 0;
  OptimizationProvenance provenance;
  std::vector<std::string> warnings;

  [[nodiscard]] const ParetoSolution& recommended() const { return front.at(recommended_index); }

  friend bool operator==(const OptimizationResult&, const OptimizationResult&) = default;
};

struct OptimizerProgress {
  std::size_t generation = 0;  // 0 = initial population
  std::size_t generations_total = 0;
  ObjectiveVector best{};           // componentwise best over the elite front
  double hypervolume = 0.0;         // elite front
  double population_hypervolume = 0.0;  // rank-0 members of the current population
};

using ProgressObserver = std::function<void(const OptimizerProgress&)>;

/// Genes the search may move: the positive label only for binary tasks, every label otherwise.
inline std::vector<bool> active_genes(const Dataset& dataset) {
  if (dataset.task() == TaskKind::binary) {
    std::vector<bool> mask(dataset.label_count(), false);
    mask[dataset.positive_index()] = true;
    return mask;
  }
  return std::vector<bool>(dataset.label_count(), true);
}

/// Profile whose resolved thresholds equal `genes` on every active gene.
inline ThresholdProfile profile_from_genes(const Dataset& dataset, std::span<const double> genes) {
  ThresholdProfile profile{{}, 0.5, dataset.task(), dataset.positive_label()};
  const auto mask = active_genes(dataset);
  for (LabelIndex l = 0; l < dataset.label_count(); ++l) {
    if (mask[l]) profile.thresholds[dataset.label(l)] = genes[l];
  }
  return profile;
}

inline ConfusionSummary confusion_for_genes(const Dataset& dataset, std::span<const double> genes) {
  return confusion(dataset, decide_labels(dataset, genes));
}

/// Objective triple of a confusion summary. Binary tasks score the positive label only: the
/// negative label's counts mirror it (its FP are the positive MP and vice versa), so summing
/// both would collapse the front onto the error count.
inline ObjectiveVector objectives_of(const Dataset& dataset, const ConfusionSummary& summary) {
  const ConstructCounts c = dataset.task() == TaskKind::binary
                                ? summary.counts[dataset.positive_index()]
                                : summary.totals();
  return {-static_cast<double>(c.tp), static_cast<double>(c.fp), static_cast<double>(c.mp)};
}

inline ObjectiveVector evaluate_genes(const Dataset& dataset, std::span<const double> genes) {
  return objectives_of(dataset, confusion_for_genes(dataset, genes));
}

/// Hypervolume reference point: (0, records * labels, records * labels).
inline ObjectiveVector hypervolume_reference(const Dataset& dataset) {
  const double bound = static_cast<double>(dataset.size() * dataset.label_count());
  return {0.0, bound, bound};
}

/// Index of the solution to recommend. With a schedule: lowest total cost. Without: highest
/// micro-F1. Ties go to lower FP, then lower MP, then the lexicographically smallest genes.
inline std::size_t recommend(std::span<const ParetoSolution> front, const Dataset& dataset,
                             const CostSchedule* schedule) {
  if (front.empty()) throw Error(ErrorCode::validation, "cannot recommend from an empty front");
  struct Key {
    double primary;
    double fp;
    double mp;
  };
  std::vector<Key> keys;
  keys.reserve(front.size());
  for (const auto& s : front) {
    const auto summary = confusion_for_genes(dataset, s.thresholds);
    const double primary = schedule ? total_cost(summary, *schedule)
                                    : -metrics_from_confusion(summary).micro.f1;
    keys.push_back({primary, s.objectives[1], s.objectives[2]});
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < front.size(); ++i) {
    const auto& a = keys[i];
    const auto& b = keys[best];
    if (a.primary != b.primary) {
      if (a.primary < b.primary) best = i;
    } else if (a.fp != b.fp) {
      if (a.fp < b.fp) best = i;
    } else if (a.mp != b.mp) {
      if (a.mp < b.mp) best = i;
    } else if (front[i].thresholds < front[best].thresholds) {
      best = i;
    }
  }
  return best;
}

namespace detail {

/// Non-dominated set of everything evaluated so far, one genome per objective vector (the
/// lexicographically smallest seen).
class EliteArchive {
 public:
  void offer(const ObjectiveVector& objectives, const std::vector<double>& genes) {
    if (auto it = members_.find(objectives); it != members_.end()) {
      if (genes < it->second) it->second = genes;
      return;
    }
    for (const auto& [obj, g] : members_) {
      if (nsga2::dominates(obj, objectives)) return;
    }
    std::erase_if(members_, [&](const auto& m) { return nsga2::dominates(objectives, m.first); });
    members_.emplace(objectives, genes);
  }

  [[nodiscard]] std::vector<ObjectiveVector> objectives() const {
    std::vector<ObjectiveVector> out;
    for (const auto& [obj, g] : members_) out.push_back(obj);
    return out;
  }

  /// Members sorted by (neg_tp, fp, mp) ascending.
  [[nodiscard]] const std::map<ObjectiveVector, std::vector<double>>& members() const {
    return members_;
  }

 private:
  std::map<ObjectiveVector, std::vector<double>> members_;
};

struct Individual {
  std::vector<double> genes;
  ObjectiveVector objectives{};
  std::size_t rank = 0;
  double crowding = 0.0;
};

/// Threshold maximizing one label's F1 on a 0.01 grid with the other genes at 0.5.
inline double f1_greedy_gene(const Dataset& dataset, LabelIndex label) {
  std::vector<double> genes(dataset.label_count(), 0.5);
  double best_t = 0.5;
  double best_f1 = -1.0;
  for (int step = 0; step <= 100; ++step) {
    genes[label] = step / 100.0;
    const auto summary = confusion_for_genes(dataset, genes);
    const double f1 = detail::f1_score(summary.counts[label]);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = genes[label];
    }
  }
  return best_t;
}

/// Sets rank and crowding on `pop` and returns the fronts (indices into pop).
inline std::vector<std::vector<std::size_t>> rank_population(std::vector<Individual>& pop) {
  std::vector<ObjectiveVector> objs;
  objs.reserve(pop.size());
  for (const auto& ind : pop) objs.push_back(ind.objectives);
  const auto ranks = nsga2::fast_nondominated_sort<3>(objs);
  auto fronts = nsga2::fronts_from_ranks(ranks);
  for (const auto& front : fronts) {
    std::vector<ObjectiveVector> fobjs;
    for (std::size_t i : front) fobjs.push_back(pop[i].objectives);
    const auto dist = nsga2::crowding_distance<3>(fobjs);
    for (std::size_t k = 0; k < front.size(); ++k) {
      pop[front[k]].rank = ranks[front[k]];
      pop[front[k]].crowding = dist[k];
    }
  }
  return fronts;
}

/// Survivor order: fronts by rank, one member per distinct objective vector within each front
/// (by crowding, descending); members repeating an already admitted objective vector come
/// last, again by rank and crowding.
inline std::vector<std::size_t> survivor_order(const std::vector<Individual>& pop,
                                               const std::vector<std::vector<std::size_t>>& fronts) {
  std::vector<std::size_t> unique;
  std::vector<std::size_t> duplicates;
  std::set<ObjectiveVector> seen;
  for (const auto& front : fronts) {
    std::vector<std::size_t> by_crowding = front;
    std::stable_sort(by_crowding.begin(), by_crowding.end(), [&](std::size_t a, std::size_t b) {
      return pop[a].crowding > pop[b].crowding;
    });
    for (std::size_t i : by_crowding) {
      (seen.insert(pop[i].objectives).second ? unique : duplicates).push_back(i);
    }
  }
  unique.insert(unique.end(), duplicates.begin(), duplicates.end());
  return unique;
}

/// Sorted distinct values a gene can take without changing its decisions: every observed score
/// of the label plus 0 and 1. A threshold t behaves like the smallest cut point >= t.
inline std::vector<double> cut_points(const Dataset& dataset, LabelIndex label) {
  std::vector<double> cuts{0.0, 1.0};
  for (const auto& r : dataset.records()) cuts.push_back(r.scores[label]);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

/// Genes with at most this many cut points are scanned exhaustively when probing.
inline constexpr std::size_t kFullScanCutPoints = 128;

/// Probe genomes around `genes`: each active gene moved to every other cut point when it has
/// few of them, otherwise one cut point up and down.
inline std::vector<std::vector<double>> cut_neighbours(const std::vector<double>& genes,
                                                       const std::vector<std::vector<double>>& cuts,
                                                       const std::vector<LabelIndex>& active) {
  std::vector<std::vector<double>> out;
  auto push = [&](LabelIndex l, double value) {
    out.push_back(genes);
    out.back()[l] = value;
  };
  for (LabelIndex l : active) {
    const auto& c = cuts[l];
    const auto cell = std::lower_bound(c.begin(), c.end(), genes[l]);
    if (c.size() <= kFullScanCutPoints) {
      for (auto it = c.begin(); it != c.end(); ++it) {
        if (it != cell) push(l, *it);
      }
      continue;
    }
    if (cell != c.begin()) push(l, *(cell - 1));
    if (cell != c.end() && cell + 1 != c.end()) push(l, *(cell + 1));
  }
  return out;
}

inline double population_front_hypervolume(const std::vector<Individual>& pop,
                                           const ObjectiveVector& reference) {
  std::vector<ObjectiveVector> objs;
  for (const auto& ind : pop) {
    if (ind.rank == 0) objs.push_back(ind.objectives);
  }
  return nsga2::hypervolume_3d(objs, reference);
}

}  // namespace detail

/// NSGA-II search over one threshold gene per vocabulary label.
///
/// The population starts from three heuristic members (all 0.5, per-label F1-greedy, all 0.0)
/// plus stratified uniform samples. Each generation runs binary tournaments on (rank, crowding),
/// SBX crossover and polynomial mutation, then keeps the best `population_size` members of
/// parents and offspring, admitting repeated objective vectors only after every distinct one.
/// Every evaluated genome is also offered to an elite archive; the returned front is that
/// archive, so no non-dominated point found along the way is lost. Each new archive member is
/// probed once along every active gene (see cut_neighbours); the probes join the next selection.
///
/// Throws Error{cancelled} if `stop` is requested; cancellation is checked between generations.
inline OptimizationResult optimize(const Dataset& dataset, const OptimizerSettings& settings,
                                   const CostSchedule* schedule = nullptr,
                                   const ProgressObserver& observer = {},
                                   std::stop_token stop = {}) {
  settings.validate();
  if (schedule) schedule->validate();

  OptimizationResult result;
  result.labels.assign(dataset.vocabulary().begin(), dataset.vocabulary().end());
  result.provenance.settings = settings;
  result.provenance.dataset_digest = dataset.content_digest();
  if (schedule) {
    result.provenance.cost_schedule_digest = cost_schedule_digest(*schedule);
    result.warnings = schedule->unknown_labels(dataset);
  }

  const std::size_t n_genes = dataset.label_count();
  const auto mask = active_genes(dataset);
  // std::span<const bool> cannot view vector<bool>; keep a plain bool array.
  std::unique_ptr<bool[]> active(new bool[n_genes]);
  for (std::size_t i = 0; i < n_genes; ++i) active[i] = mask[i];
  const std::span<const bool> active_span(active.get(), n_genes);

  std::vector<LabelIndex> active_labels;
  for (LabelIndex l = 0; l < n_genes; ++l) {
    if (mask[l]) active_labels.push_back(l);
  }
  const auto reference = hypervolume_reference(dataset);

  bool any_positive = false;
  for (LabelIndex l : active_labels) any_positive = any_positive || dataset.positives(l) > 0;
  if (!any_positive) {
    std::vector<double> genes(n_genes, 0.0);
    for (LabelIndex l : active_labels) genes[l] = 1.0;
    result.warnings.push_back(
        "no label has any positive record; returning the all-max-threshold solution");
    result.front.push_back({genes, evaluate_genes(dataset, genes), 0, nsga2::kInfinity});
    result.recommended_index = 0;
    if (observer) {
      observer({settings.generations, settings.generations, result.front[0].objectives,
                nsga2::hypervolume_3d(std::vector{result.front[0].objectives}, reference),
                nsga2::hypervolume_3d(std::vector{result.front[0].objectives}, reference)});
    }
    return result;
  }

  nsga2::Rng rng(settings.rng_seed);
  const nsga2::SbxParams sbx{settings.crossover_probability, settings.crossover_distribution_index};
  const nsga2::MutationParams mutation{settings.mutation_probability(n_genes),
                                       settings.mutation_distribution_index};
  const std::size_t n = settings.population_size;
  detail::EliteArchive archive;
  std::vector<std::vector<double>> cuts(n_genes);
  for (LabelIndex l : active_labels) cuts[l] = detail::cut_points(dataset, l);
  std::set<ObjectiveVector> probed;

  auto make = [&](std::vector<double> genes) {
    detail::Individual ind{std::move(genes), {}, 0, 0.0};
    ind.objectives = evaluate_genes(dataset, ind.genes);
    archive.offer(ind.objectives, ind.genes);
    return ind;
  };

  auto probe_archive = [&](std::vector<detail::Individual>& into) {
    std::vector<std::vector<double>> fresh;
    for (const auto& [obj, genes] : archive.members()) {
      if (probed.insert(obj).second) fresh.push_back(genes);
    }
    for (const auto& genes : fresh) {
      for (auto& next : detail::cut_neighbours(genes, cuts, active_labels)) into.push_back(make(std::move(next)));
    }
  };

  // Initial population.
  std::vector<std::vector<double>> seeds;
  auto masked = [&](double value) {
    std::vector<double> genes(n_genes, 0.0);
    for (LabelIndex l : active_labels) genes[l] = value;
    return genes;
  };
  seeds.push_back(masked(0.5));
  {
    auto genes = masked(0.0);
    for (LabelIndex l : active_labels) genes[l] = detail::f1_greedy_gene(dataset, l);
    seeds.push_back(std::move(genes));
  }
  seeds.push_back(masked(0.0));

  const std::size_t n_random = n - seeds.size();
  std::vector<std::vector<double>> strata(n_genes);
  for (LabelIndex l : active_labels) {
    // Latin-hypercube: one sample per stratum, strata shuffled independently per gene.
    auto& column = strata[l];
    for (std::size_t k = 0; k < n_random; ++k) {
      column.push_back((static_cast<double>(k) + nsga2::uniform01(rng)) /
                       static_cast<double>(n_random));
    }
    for (std::size_t k = n_random; k > 1; --k) {
      std::swap(column[k - 1], column[nsga2::uniform_index(rng, k)]);
    }
  }
  for (std::size_t k = 0; k < n_random; ++k) {
    auto genes = masked(0.0);
    for (LabelIndex l : active_labels) genes[l] = strata[l][k];
    seeds.push_back(std::move(genes));
  }

  std::vector<detail::Individual> pop;
  pop.reserve(2 * n);
  for (auto& genes : seeds) pop.push_back(make(std::move(genes)));
  detail::rank_population(pop);

  auto report = [&](std::size_t generation) {
    if (!observer) return;
    OptimizerProgress p;
    p.generation = generation;
    p.generations_total = settings.generations;
    const auto objs = archive.objectives();
    p.best = objs.front();
    for (const auto& o : objs) {
      for (std::size_t k = 0; k < 3; ++k) p.best[k] = std::min(p.best[k], o[k]);
    }
    p.hypervolume = nsga2::hypervolume_3d(objs, reference);
    p.population_hypervolume = detail::population_front_hypervolume(pop, reference);
    observer(p);
  };
  report(0);

  auto tournament = [&]() -> const detail::Individual& {
    const auto& a = pop[nsga2::uniform_index(rng, pop.size())];
    const auto& b = pop[nsga2::uniform_index(rng, pop.size())];
    return nsga2::crowded_less(b.rank, b.crowding, a.rank, a.crowding) ? b : a;
  };

  for (std::size_t gen = 1; gen <= settings.generations; ++gen) {
    if (stop.stop_requested()) throw Error(ErrorCode::cancelled, "optimization cancelled");

    std::vector<detail::Individual> offspring;
    offspring.reserve(n);
    while (offspring.size() < n) {
      const auto& pa = tournament();
      const auto& pb = tournament();
      auto [ca, cb] = nsga2::sbx_crossover(pa.genes, pb.genes, sbx, rng, active_span);
      offspring.push_back(make(nsga2::polynomial_mutation(ca, mutation, rng, active_span)));
      offspring.push_back(make(nsga2::polynomial_mutation(cb, mutation, rng, active_span)));
    }

    probe_archive(offspring);
    for (auto& child : offspring) pop.push_back(std::move(child));
    const auto fronts = detail::rank_population(pop);
    std::vector<detail::Individual> next;
    next.reserve(n);
    for (std::size_t i : detail::survivor_order(pop, fronts)) {
      if (next.size() == n) break;
      next.push_back(pop[i]);
    }
    pop = std::move(next);
    detail::rank_population(pop);
    report(gen);
  }

  // The elite archive is the returned front, sorted by objectives.
  std::vector<ObjectiveVector> front_objs;
  for (const auto& [obj, genes] : archive.members()) {
    result.front.push_back({genes, obj, 0, 0.0});
    front_objs.push_back(obj);
  }
  const auto crowd = nsga2::crowding_distance<3>(front_objs);
  for (std::size_t i = 0; i < result.front.size(); ++i) result.front[i].crowding = crowd[i];

  result.recommended_index = recommend(result.front, dataset, schedule);
  return result;
}

}  // namespace threshy

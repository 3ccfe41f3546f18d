#pragma once

// Querying memory: conditional distributions over one free slot, sampling at
// inverse temperature beta, ones-vector marginalization, recall, entity
// profiles and association.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "engram/facts.hpp"
#include "engram/memory_model.hpp"
#include "engram/random.hpp"
#include "engram/tensor_core.hpp"

namespace engram {

struct Free {};
struct Fixed {
  SymbolId id;
};
/// Sums the slot out by entering ones at the index layer (nonnegative models only).
struct Marginalized {};
struct Clamped {
  LatentVector vector;
};

using SlotSpec = std::variant<Free, Fixed, Marginalized, Clamped>;

struct SlotPattern {
  std::vector<SlotSpec> slots;

  static SlotPattern semantic(SlotSpec s, SlotSpec p, SlotSpec o) {
    return {{std::move(s), std::move(p), std::move(o)}};
  }
  static SlotPattern episodic(SlotSpec s, SlotSpec p, SlotSpec o, SlotSpec t) {
    return {{std::move(s), std::move(p), std::move(o), std::move(t)}};
  }

  std::size_t free_slot() const {
    std::size_t found = slots.size();
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (std::holds_alternative<Free>(slots[i])) {
        if (found != slots.size()) throw UsageError("query pattern has more than one free slot");
        found = i;
      }
    if (found == slots.size()) throw UsageError("query pattern has no free slot");
    return found;
  }

  bool has_marginalized() const {
    return std::any_of(slots.begin(), slots.end(),
                       [](const SlotSpec& s) { return std::holds_alternative<Marginalized>(s); });
  }
};

/// Scoring rule turning scores into probabilities: exp(beta * theta), or
/// theta itself (`linear`, nonnegative models only).
struct Beta {
  double value = 5.0;
  bool linear = false;

  static Beta softmax(double beta) { return {beta, false}; }
  static Beta linear_scores() { return {0.0, true}; }
};

struct QueryResult {
  std::size_t free_slot = 0;
  std::vector<SymbolId> candidates;
  std::vector<double> scores;
  std::vector<double> probabilities;
  Beta beta;

  /// Candidate positions by descending probability, lower id first on ties.
  std::vector<std::size_t> ranking() const {
    std::vector<std::size_t> idx(candidates.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return probabilities[a] > probabilities[b];
    });
    return idx;
  }
};

/// Normalizes scores under `beta`. Softmax is shifted by the max score.
inline std::vector<double> normalize_scores(std::span<const double> scores, Beta beta) {
  if (scores.empty()) throw DataError("cannot normalize an empty vocabulary");
  std::vector<double> p(scores.size());
  double total = 0.0;
  if (beta.linear) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < 0.0)
        throw NumericError("linear scoring needs nonnegative scores, got " +
                           std::to_string(scores[i]));
      p[i] = scores[i];
      total += p[i];
    }
    if (!(total > 0.0)) throw NumericError("all linear-mode scores are zero");
  } else {
    if (!(beta.value >= 0.0)) throw UsageError("beta must be >= 0");
    const double top = *std::max_element(scores.begin(), scores.end());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      p[i] = std::exp(beta.value * (scores[i] - top));
      total += p[i];
    }
  }
  if (!std::isfinite(total)) throw NumericError("non-finite normalizer");
  for (double& x : p) x /= total;
  return p;
}

namespace detail {

template <typename Model>
void check_beta(const Model& m, Beta beta) {
  if (beta.linear) {
    if (!m.config.nonnegative)
      throw UsageError("linear scoring is only defined for nonnegative models");
  } else if (!(beta.value >= 0.0)) {
    throw UsageError("beta must be >= 0, got " + std::to_string(beta.value));
  }
}

// Latent vector per slot after substitution; the free slot's entry stays empty.
template <typename Model>
std::vector<LatentVector> slot_vectors(const Model& m, const SlotPattern& pattern,
                                       std::size_t free_slot) {
  if (pattern.slots.size() != Model::order)
    throw UsageError("pattern has " + std::to_string(pattern.slots.size()) +
                     " slots, model expects " + std::to_string(Model::order));
  std::vector<LatentVector> vs(Model::order);
  for (std::size_t i = 0; i < Model::order; ++i) {
    if (i == free_slot) continue;
    const EmbeddingTable& table = m.table(i);
    const auto& slot = pattern.slots[i];
    if (const auto* f = std::get_if<Fixed>(&slot)) {
      const auto row = table.row(f->id);
      vs[i].assign(row.begin(), row.end());
    } else if (const auto* c = std::get_if<Clamped>(&slot)) {
      if (c->vector.size() != m.config.rank)
        throw DimensionError(std::string(mode_name(i)) + " slot: clamped vector length " +
                             std::to_string(c->vector.size()) + " does not match rank " +
                             std::to_string(m.config.rank));
      vs[i] = c->vector;
    } else {
      if (!m.config.nonnegative)
        throw UsageError(std::string("cannot marginalize the ") + mode_name(i) +
                         " slot of a signed model: the ones-vector sum equals the "
                         "marginal only when all parameters are nonnegative");
      vs[i] = table.column_sum();
    }
  }
  return vs;
}

template <typename Model>
LatentVector free_activation(const Model& m, const std::vector<LatentVector>& vs,
                             std::size_t free_slot) {
  std::vector<std::span<const double>> views(vs.begin(), vs.end());
  return contract_leave_one(m.core, views, free_slot);
}

}  // namespace detail

/// P(c) proportional to exp(beta * a_c . h_free) (or a_c . h_free in linear
/// mode) over the free slot's vocabulary.
template <typename Model>
QueryResult conditional_distribution(const Model& m, const SlotPattern& pattern, Beta beta) {
  detail::check_beta(m, beta);
  const std::size_t free_slot = pattern.free_slot();
  const auto vs = detail::slot_vectors(m, pattern, free_slot);
  const LatentVector h = detail::free_activation(m, vs, free_slot);

  const EmbeddingTable& vocab = m.table(free_slot);
  if (vocab.rows() == 0)
    throw DataError(std::string("empty ") + kind_name(vocab.kind()) + " vocabulary");

  QueryResult out;
  out.free_slot = free_slot;
  out.beta = beta;
  out.candidates.resize(vocab.rows());
  out.scores.resize(vocab.rows());
  for (std::size_t c = 0; c < vocab.rows(); ++c) {
    out.candidates[c] = static_cast<SymbolId>(c);
    out.scores[c] = dot(vocab.row(static_cast<SymbolId>(c)), h);
  }
  out.probabilities = normalize_scores(out.scores, beta);
  return out;
}

/// Conditional with at least one slot summed out. Scores are the unnormalized
/// sums over the marginalized slots, so this is restricted to nonnegative
/// models under linear scoring.
template <typename Model>
QueryResult marginal_distribution(const Model& m, const SlotPattern& pattern, Beta beta) {
  if (!m.config.nonnegative)
    throw UsageError("marginal_distribution refuses signed models: entering ones sums "
                     "scores, which equals marginalization only for nonnegative parameters");
  if (!beta.linear)
    throw UsageError("marginal_distribution needs linear scoring; exp(beta * sum) is not "
                     "a sum of exp(beta * theta)");
  if (!pattern.has_marginalized()) throw UsageError("pattern has no marginalized slot");
  return conditional_distribution(m, pattern, beta);
}

inline std::vector<SymbolId> sample_from(const QueryResult& dist, std::size_t n, Rng& rng) {
  std::vector<SymbolId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(dist.candidates[draw_categorical(dist.probabilities, rng)]);
  return out;
}

/// n i.i.d. draws of the free slot; deterministic in `seed`.
template <typename Model>
std::vector<SymbolId> sample(const Model& m, const SlotPattern& pattern, Beta beta, std::size_t n,
                             std::uint64_t seed) {
  if (n == 0) throw UsageError("sample count must be >= 1");
  const QueryResult dist = conditional_distribution(m, pattern, beta);
  Rng rng(seed);
  return sample_from(dist, n, rng);
}

struct ScoredTriple {
  SymbolId s = 0, p = 0, o = 0;
  double score = 0.0;
  double probability = 0.0;
};

/// Enumerated joint over (s, p, o) in lexicographic id order.
struct JointDistribution {
  std::size_t entities = 0, predicates = 0;
  std::vector<ScoredTriple> entries;

  const ScoredTriple& at(SymbolId s, SymbolId p, SymbolId o) const {
    return entries[(std::size_t{s} * predicates + p) * entities + o];
  }

  /// Highest scores first; lexicographically lower triple first on ties.
  std::vector<ScoredTriple> top(std::size_t k) const {
    std::vector<ScoredTriple> sorted = entries;
    std::stable_sort(sorted.begin(), sorted.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
      return a.score > b.score;
    });
    if (sorted.size() > k) sorted.resize(k);
    return sorted;
  }
};

inline constexpr std::size_t kEnumerationCap = 1'000'000;

namespace detail {

inline void check_enumeration(std::size_t tuples, std::size_t cap) {
  if (tuples > cap)
    throw UsageError("vocabulary product " + std::to_string(tuples) + " exceeds the enumeration cap " +
                     std::to_string(cap) + "; use the sampling variant instead");
}

// Shared by recall, perception and distillation so every decoder sees the
// same arithmetic as conditional_distribution(Fixed s, Fixed p, Free o, ...).
template <typename Model>
JointDistribution enumerate_triples(const Model& m, std::span<const double> time_vector, Beta beta,
                                    std::size_t cap) {
  check_beta(m, beta);
  const std::size_t ne = m.entities->rows(), np = m.predicates->rows();
  if (ne == 0 || np == 0) throw DataError("empty entity or predicate vocabulary");
  check_enumeration(ne * np * ne, cap);

  JointDistribution joint;
  joint.entities = ne;
  joint.predicates = np;
  joint.entries.reserve(ne * np * ne);
  std::vector<std::span<const double>> views(Model::order);
  if constexpr (Model::order == 4) views[3] = time_vector;
  for (SymbolId s = 0; s < ne; ++s) {
    views[0] = m.entities->row(s);
    for (SymbolId p = 0; p < np; ++p) {
      views[1] = m.predicates->row(p);
      const LatentVector h = contract_leave_one(m.core, views, mode_index(Mode::object));
      for (SymbolId o = 0; o < ne; ++o)
        joint.entries.push_back({s, p, o, dot(m.entities->row(o), h), 0.0});
    }
  }
  std::vector<double> scores(joint.entries.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = joint.entries[i].score;
  const auto probs = normalize_scores(scores, beta);
  for (std::size_t i = 0; i < probs.size(); ++i) joint.entries[i].probability = probs[i];
  return joint;
}

}  // namespace detail

/// Joint P(s, p, o | h) for an episodic model with the time slot clamped to `h`.
inline JointDistribution decode_triples(const EpisodicModel& m, std::span<const double> h, Beta beta,
                                        std::size_t cap = kEnumerationCap) {
  if (h.size() != m.config.rank)
    throw DimensionError("time vector length " + std::to_string(h.size()) +
                         " does not match rank " + std::to_string(m.config.rank));
  return detail::enumerate_triples(m, h, beta, cap);
}

/// Joint P(s, p, o) of a semantic model.
inline JointDistribution semantic_triples(const SemanticModel& m, Beta beta,
                                          std::size_t cap = kEnumerationCap) {
  return detail::enumerate_triples(m, {}, beta, cap);
}

/// Top-k triples remembered at time t.
inline std::vector<ScoredTriple> recall(const EpisodicModel& m, SymbolId t, Beta beta,
                                        std::size_t top_k, std::size_t cap = kEnumerationCap) {
  return decode_triples(m, m.times->row(t), beta, cap).top(top_k);
}

/// Draws n triples at time t by chained sampling: subject from its marginal,
/// predicate given subject, object given both.
inline std::vector<Triple> recall_sample(const EpisodicModel& m, SymbolId t, Beta beta,
                                         std::size_t n, std::uint64_t seed,
                                         std::size_t cap = kEnumerationCap) {
  if (n == 0) throw UsageError("sample count must be >= 1");
  const auto joint = decode_triples(m, m.times->row(t), beta, cap);
  const std::size_t ne = joint.entities, np = joint.predicates;

  std::vector<double> subject_marginal(ne, 0.0);
  for (const auto& e : joint.entries) subject_marginal[e.s] += e.probability;

  Rng rng(seed);
  std::vector<Triple> out;
  out.reserve(n);
  std::vector<double> predicate_given_s(np);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = static_cast<SymbolId>(draw_categorical(subject_marginal, rng));
    double total = 0.0;
    for (SymbolId p = 0; p < np; ++p) {
      double acc = 0.0;
      for (SymbolId o = 0; o < ne; ++o) acc += joint.at(s, p, o).probability;
      predicate_given_s[p] = acc;
      total += acc;
    }
    for (double& x : predicate_given_s) x /= total;
    const auto p = static_cast<SymbolId>(draw_categorical(predicate_given_s, rng));
    const auto objects =
        conditional_distribution(m, SlotPattern::episodic(Fixed{s}, Fixed{p}, Free{}, Fixed{t}), beta);
    const auto o = static_cast<SymbolId>(draw_categorical(objects.probabilities, rng));
    out.push_back({s, p, o});
  }
  return out;
}

/// Top-k (p, o) pairs known about entity i, ranked over the enumerated joint.
inline std::vector<ScoredTriple> entity_profile(const SemanticModel& m, SymbolId i, Beta beta,
                                                std::size_t top_k,
                                                std::size_t cap = kEnumerationCap) {
  detail::check_beta(m, beta);
  const std::size_t ne = m.entities->rows(), np = m.predicates->rows();
  if (np == 0) throw DataError("empty predicate vocabulary");
  detail::check_enumeration(np * ne, cap);
  const auto a_i = m.entities->row(i);

  JointDistribution joint;
  joint.entities = ne;
  joint.predicates = np;
  std::vector<double> scores;
  std::vector<std::span<const double>> views{a_i, {}, {}};
  for (SymbolId p = 0; p < np; ++p) {
    views[1] = m.predicates->row(p);
    const LatentVector h = contract_leave_one(m.core, views, mode_index(Mode::object));
    for (SymbolId o = 0; o < ne; ++o) {
      joint.entries.push_back({i, p, o, dot(m.entities->row(o), h), 0.0});
      scores.push_back(joint.entries.back().score);
    }
  }
  const auto probs = normalize_scores(scores, beta);
  for (std::size_t k = 0; k < probs.size(); ++k) joint.entries[k].probability = probs[k];
  return joint.top(top_k);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

/// Top-k rows most cosine-similar to row i, excluding i; lower id first on ties.
inline std::vector<std::pair<SymbolId, double>> associate(const EmbeddingTable& table, SymbolId i,
                                                          std::size_t k) {
  const auto a_i = table.row(i);
  if (k > table.rows())
    throw UsageError("k = " + std::to_string(k) + " exceeds vocabulary size " +
                     std::to_string(table.rows()));
  std::vector<std::pair<SymbolId, double>> sims;
  for (SymbolId j = 0; j < table.rows(); ++j)
    if (j != i) sims.emplace_back(j, cosine_similarity(a_i, table.row(j)));
  std::stable_sort(sims.begin(), sims.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (sims.size() > k) sims.resize(k);
  return sims;
}

}  // namespace engram

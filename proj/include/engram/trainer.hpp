#pragma once

// Logistic-loss fitting of Tucker memories with negative sampling.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "engram/facts.hpp"
#include "engram/memory_model.hpp"
#include "engram/random.hpp"
#include "engram/tensor_core.hpp"

namespace engram {

/// How a negative sample is drawn from its positive: replace the object (or,
/// for quadruples, object or time with equal odds), or replace the whole
/// (s, p, o) part with a uniform random triple at the same time. The second
/// covers the cross combinations that joint decoding ranks against.
enum class Corruption { object_or_time, whole_triple };

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 0.05;
  std::size_t negatives = 5;  // per positive
  double l2 = 1e-4;
  std::uint64_t seed = 1;
  bool nonnegative_projection = false;
  double decay = 0.0;      // lr_epoch = lr / (1 + decay * epoch)
  bool full_batch = false;  // one gradient step per epoch, negatives drawn once
  Corruption corruption = Corruption::object_or_time;

  void validate() const {
    if (epochs == 0) throw UsageError("epochs must be positive");
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (!(l2 >= 0.0)) throw UsageError("l2 weight must be >= 0");
    if (!(decay >= 0.0)) throw UsageError("decay must be >= 0");
  }
};

/// One training example; ids are in mode order, only the first `order` used.
struct LabeledFact {
  std::array<SymbolId, 4> ids{};
  double label = 1.0;
};

inline LabeledFact labeled(const Triple& f, double label) { return {{f.s, f.p, f.o, 0}, label}; }
inline LabeledFact labeled(const Quadruple& f, double label) {
  return {{f.s, f.p, f.o, f.t}, label};
}

struct Gradients {
  double loss = 0.0;
  std::map<SymbolId, LatentVector> entities;
  std::map<SymbolId, LatentVector> predicates;
  std::map<SymbolId, LatentVector> times;
  std::vector<double> core;

  std::map<SymbolId, LatentVector>& for_mode(std::size_t mode) {
    switch (mode) {
      case 0:
      case 2: return entities;
      case 1: return predicates;
      default: return times;
    }
  }
};

struct TrainReport {
  std::vector<double> epoch_losses;
  double final_loss = 0.0;
};

namespace detail {

// log(1 + exp(x)) without overflow
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// out += coeff * v_1 (outer) v_2 (outer) ... in the core's layout
inline void add_outer(std::span<double> out, double coeff,
                      std::span<const std::span<const double>> vectors) {
  std::vector<double> prod{coeff};
  for (const auto& v : vectors) {
    std::vector<double> next(prod.size() * v.size());
    for (std::size_t i = 0; i < prod.size(); ++i)
      for (std::size_t k = 0; k < v.size(); ++k) next[i * v.size() + k] = prod[i] * v[k];
    prod = std::move(next);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += prod[i];
}

template <typename Model>
std::vector<std::span<const double>> example_vectors(const Model& m, const LabeledFact& f) {
  std::vector<std::span<const double>> vs(Model::order);
  for (std::size_t i = 0; i < Model::order; ++i) vs[i] = m.table(i).row(f.ids[i]);
  return vs;
}

}  // namespace detail

/// Mean binary cross-entropy of sig(theta) against the labels plus
/// (l2 / 2) * (|touched rows|^2 + |core|^2), with analytic gradients.
template <typename Model>
Gradients loss_and_gradients(const Model& m, std::span<const LabeledFact> batch, double l2) {
  if (batch.empty()) throw UsageError("empty training batch");
  Gradients g;
  g.core.assign(m.core.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (const auto& f : batch) {
    const auto vs = detail::example_vectors(m, f);
    const double theta = contract(m.core, vs);
    g.loss += (detail::softplus(theta) - f.label * theta) * inv_n;
    const double dtheta = (triple_probability(theta) - f.label) * inv_n;

    for (std::size_t mode = 0; mode < Model::order; ++mode) {
      const LatentVector h = contract_leave_one(m.core, vs, mode);
      auto [it, fresh] = g.for_mode(mode).try_emplace(f.ids[mode], m.config.rank, 0.0);
      for (std::size_t r = 0; r < h.size(); ++r) it->second[r] += dtheta * h[r];
    }
    detail::add_outer(g.core, dtheta, vs);
  }

  if (l2 > 0.0) {
    auto regularize = [&](std::map<SymbolId, LatentVector>& grads, const EmbeddingTable& table) {
      for (auto& [id, grad] : grads) {
        const auto row = table.row(id);
        g.loss += 0.5 * l2 * dot(row, row);
        for (std::size_t r = 0; r < grad.size(); ++r) grad[r] += l2 * row[r];
      }
    };
    regularize(g.entities, *m.entities);
    regularize(g.predicates, *m.predicates);
    if constexpr (Model::order == 4) regularize(g.times, *m.times);
    const auto core = m.core.values();
    for (std::size_t i = 0; i < core.size(); ++i) {
      g.loss += 0.5 * l2 * core[i] * core[i];
      g.core[i] += l2 * core[i];
    }
  }
  return g;
}

/// Gradient step on the touched rows and the core; rows not in `g` are untouched.
template <typename Model>
void apply_gradients(Model& m, const Gradients& g, double lr, bool project) {
  auto step = [&](const std::map<SymbolId, LatentVector>& grads, EmbeddingTable& table) {
    for (const auto& [id, grad] : grads) {
      auto row = table.row(id);
      for (std::size_t r = 0; r < row.size(); ++r) {
        row[r] -= lr * grad[r];
        if (project && row[r] < 0.0) row[r] = 0.0;
      }
    }
  };
  step(g.entities, *m.entities);
  step(g.predicates, *m.predicates);
  if constexpr (Model::order == 4) step(g.times, *m.times);
  auto core = m.core.values();
  for (std::size_t i = 0; i < core.size(); ++i) {
    core[i] -= lr * g.core[i];
    if (project && core[i] < 0.0) core[i] = 0.0;
  }
}

namespace detail {

inline void check_registry_prefix(const SymbolRegistry& store, const SymbolRegistry& model) {
  if (store.size() > model.size())
    throw DataError(std::string(kind_name(store.kind())) + " registry of the facts (" +
                    std::to_string(store.size()) + " symbols) is larger than the model's (" +
                    std::to_string(model.size()) + ")");
  for (SymbolId i = 0; i < store.size(); ++i)
    if (store.name(i) != model.name(i))
      throw DataError(std::string(kind_name(store.kind())) + " id " + std::to_string(i) +
                      " is '" + store.name(i) + "' in the facts but '" + model.name(i) +
                      "' in the model");
}

template <typename Model>
std::vector<LabeledFact> positives_for(const Model& m, const FactStore& store) {
  check_registry_prefix(store.entities, m.entities->registry());
  check_registry_prefix(store.predicates, m.predicates->registry());
  std::vector<LabeledFact> out;
  if constexpr (Model::order == 4) {
    check_registry_prefix(store.times, m.times->registry());
    for (const auto& q : store.quadruples) out.push_back(labeled(q, 1.0));
  } else {
    for (const auto& t : store.triples) out.push_back(labeled(t, 1.0));
  }
  return out;
}

struct FactKey {
  std::array<SymbolId, 4> ids;
  auto operator<=>(const FactKey&) const = default;
};

// Uniform corruption, resampled when it hits a known positive.
template <typename Model>
void draw_negatives(const Model& m, const LabeledFact& pos, std::size_t count, Corruption how,
                    const std::set<FactKey>& known, Rng& rng, std::vector<LabeledFact>& out) {
  constexpr int kTries = 16;
  for (std::size_t k = 0; k < count; ++k) {
    std::array<bool, 4> redraw{};
    if (how == Corruption::whole_triple) {
      redraw = {true, true, true, false};
    } else {
      std::size_t mode = mode_index(Mode::object);
      if constexpr (Model::order == 4)
        if (uniform_index(rng, 2) == 1) mode = mode_index(Mode::time);
      redraw[mode] = true;
    }
    for (int attempt = 0; attempt < kTries; ++attempt) {
      LabeledFact neg = pos;
      neg.label = 0.0;
      for (std::size_t i = 0; i < Model::order; ++i)
        if (redraw[i]) neg.ids[i] = static_cast<SymbolId>(uniform_index(rng, m.table(i).rows()));
      if (!known.contains(FactKey{neg.ids})) {
        out.push_back(neg);
        break;
      }
    }
  }
}

}  // namespace detail

/// SGD over the store's facts of the model's arity (quadruples for episodic,
/// triples for semantic). Deterministic in config.seed.
template <typename Model>
TrainReport fit(Model& m, const FactStore& store, const TrainConfig& cfg) {
  cfg.validate();
  auto positives = detail::positives_for(m, store);
  if (positives.empty())
    throw DataError(std::string("no ") + (Model::order == 4 ? "quadruples" : "triples") +
                    " to train on");
  std::set<detail::FactKey> known;
  for (const auto& p : positives) known.insert({p.ids});

  const bool project = cfg.nonnegative_projection || m.config.nonnegative;
  Rng rng(cfg.seed);
  TrainReport report;

  std::vector<LabeledFact> full;
  if (cfg.full_batch) {
    full = positives;
    for (const auto& p : positives) detail::draw_negatives(m, p, cfg.negatives, cfg.corruption, known, rng, full);
  }

  std::vector<LabeledFact> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate / (1.0 + cfg.decay * static_cast<double>(epoch));
    double epoch_loss = 0.0;
    if (cfg.full_batch) {
      const auto g = loss_and_gradients(m, std::span<const LabeledFact>(full), cfg.l2);
      epoch_loss = g.loss;
      apply_gradients(m, g, lr, project);
    } else {
      shuffle(std::span<LabeledFact>(positives), rng);
      for (const auto& p : positives) {
        batch.assign(1, p);
        detail::draw_negatives(m, p, cfg.negatives, cfg.corruption, known, rng, batch);
        const auto g = loss_and_gradients(m, std::span<const LabeledFact>(batch), cfg.l2);
        epoch_loss += g.loss / static_cast<double>(positives.size());
        apply_gradients(m, g, lr, project);
      }
    }
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                         " (loss is not finite); lower the learning rate");
    report.epoch_losses.push_back(epoch_loss);
  }
  report.final_loss = report.epoch_losses.back();
  return report;
}

struct MarginReport {
  double held_out_mean = 0.0;
  double negative_mean = 0.0;
  double margin = 0.0;  // held_out_mean - negative_mean
};

template <typename Model>
double score_fact(const Model& m, const LabeledFact& f) {
  return contract(m.core, detail::example_vectors(m, f));
}

/// Mean score of facts the model never saw minus mean score of corruptions.
template <typename Model>
MarginReport evaluate_materialization(const Model& m, std::span<const LabeledFact> held_out,
                                      std::span<const LabeledFact> negatives) {
  if (held_out.empty() || negatives.empty())
    throw UsageError("materialization needs held-out facts and negatives");
  MarginReport r;
  for (const auto& f : held_out) r.held_out_mean += score_fact(m, f);
  for (const auto& f : negatives) r.negative_mean += score_fact(m, f);
  r.held_out_mean /= static_cast<double>(held_out.size());
  r.negative_mean /= static_cast<double>(negatives.size());
  r.margin = r.held_out_mean - r.negative_mean;
  return r;
}

/// n uniform object corruptions of `fact` (no filtering).
template <typename Model>
std::vector<LabeledFact> random_corruptions(const Model& m, const LabeledFact& fact, std::size_t n,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledFact> out;
  const std::size_t vocab = m.entities->rows();
  for (std::size_t i = 0; i < n; ++i) {
    LabeledFact neg = fact;
    neg.label = 0.0;
    neg.ids[mode_index(Mode::object)] = static_cast<SymbolId>(uniform_index(rng, vocab));
    out.push_back(neg);
  }
  return out;
}

/// n object corruptions of `fact` that are neither the fact itself nor a
/// fact in `known` (the filtered protocol). Throws when no such object exists.
template <typename Model>
std::vector<LabeledFact> filtered_corruptions(const Model& m, const LabeledFact& fact,
                                              const FactStore& known, std::size_t n,
                                              std::uint64_t seed) {
  const std::size_t vocab = m.entities->rows();
  auto is_known = [&](const LabeledFact& f) {
    if constexpr (Model::order == 4)
      return known.quadruples.contains({f.ids[0], f.ids[1], f.ids[2], f.ids[3]});
    else
      return known.triples.contains({f.ids[0], f.ids[1], f.ids[2]});
  };
  std::vector<SymbolId> allowed;
  for (SymbolId o = 0; o < vocab; ++o) {
    LabeledFact neg = fact;
    neg.ids[mode_index(Mode::object)] = o;
    if (o != fact.ids[mode_index(Mode::object)] && !is_known(neg)) allowed.push_back(o);
  }
  if (allowed.empty()) throw DataError("every object corruption of the fact is a known fact");
  Rng rng(seed);
  std::vector<LabeledFact> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledFact neg = fact;
    neg.label = 0.0;
    neg.ids[mode_index(Mode::object)] = allowed[uniform_index(rng, allowed.size())];
    out.push_back(neg);
  }
  return out;
}

}  // namespace engram

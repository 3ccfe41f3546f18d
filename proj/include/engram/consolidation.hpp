#pragma once

// Deriving semantic memory from episodic memory: time marginalization of the
// core, replay of decoded triples into a semantic model, distillation into an
// explicit knowledge graph, and engram copying.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "engram/facts.hpp"
#include "engram/memory_model.hpp"
#include "engram/query.hpp"
#include "engram/random.hpp"
#include "engram/trainer.hpp"

namespace engram {

/// Explicit (s, p, o) store; re-insertion keeps the larger confidence.
class KnowledgeGraphStore {
public:
  /// Returns true when the triple is new or its confidence rose.
  bool insert(const Triple& t, double confidence) {
    if (!(confidence > 0.0 && confidence <= 1.0))
      throw UsageError("confidence must lie in (0, 1], got " + std::to_string(confidence));
    auto [it, fresh] = facts_.try_emplace(t, confidence);
    if (fresh) return true;
    if (confidence > it->second) {
      it->second = confidence;
      return true;
    }
    return false;
  }

  std::size_t size() const noexcept { return facts_.size(); }
  bool contains(const Triple& t) const { return facts_.contains(t); }
  double confidence(const Triple& t) const {
    auto it = facts_.find(t);
    if (it == facts_.end()) throw DataError("triple not in knowledge graph");
    return it->second;
  }
  const std::map<Triple, double>& facts() const noexcept { return facts_; }

  /// "subject<TAB>predicate<TAB>object<TAB>confidence" lines.
  void write_tsv(std::ostream& out, const SymbolRegistry& entities,
                 const SymbolRegistry& predicates) const {
    char buf[32];
    for (const auto& [t, c] : facts_) {
      std::snprintf(buf, sizeof buf, "%.17g", c);
      out << entities.name(t.s) << '\t' << predicates.name(t.p) << '\t' << entities.name(t.o)
          << '\t' << buf << '\n';
    }
  }

  bool operator==(const KnowledgeGraphStore&) const = default;

private:
  std::map<Triple, double> facts_;
};

namespace detail {

inline void check_time_ids(const EpisodicModel& e, std::span<const SymbolId> time_ids) {
  if (!e.config.nonnegative)
    throw UsageError("time marginalization needs a nonnegative episodic model");
  if (time_ids.empty()) throw UsageError("time list is empty");
  for (SymbolId t : time_ids) e.times->registry().check(t);
}

}  // namespace detail

/// One step of g^s(r1,r2,r3) += sum_r4 a_t[r4] g^e(r1,r2,r3,r4).
inline void accumulate_time(CoreTensor& semantic_core, const EpisodicModel& e, SymbolId t) {
  if (semantic_core.order() != 3 || semantic_core.rank() != e.config.rank)
    throw DimensionError("semantic core shape does not match the episodic model");
  const auto a_t = e.times->row(t);
  const std::size_t r = e.config.rank;
  const auto ge = e.core.values();
  auto gs = semantic_core.values();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    double acc = 0.0;
    for (std::size_t r4 = 0; r4 < r; ++r4) acc += a_t[r4] * ge[i * r + r4];
    gs[i] += acc;
  }
}

/// Semantic model whose core is the episodic core summed over `time_ids`,
/// sharing the episodic entity and predicate tables. With `normalize` the
/// core is divided by |time_ids|.
inline SemanticModel marginalize_time(const EpisodicModel& e, std::span<const SymbolId> time_ids,
                                      bool normalize) {
  detail::check_time_ids(e, time_ids);
  SemanticModel s{e.config, e.entities, e.predicates, CoreTensor(3, e.config.rank)};
  for (SymbolId t : time_ids) accumulate_time(s.core, e, t);
  if (normalize) {
    const double n = static_cast<double>(time_ids.size());
    for (double& g : s.core.values()) g /= n;
  }
  return s;
}

/// Same sums computed element by element in one pass, same summation order.
inline CoreTensor marginalize_time_batch(const EpisodicModel& e, std::span<const SymbolId> time_ids) {
  detail::check_time_ids(e, time_ids);
  const std::size_t r = e.config.rank;
  CoreTensor out(3, r);
  const auto ge = e.core.values();
  auto gs = out.values();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    double total = 0.0;
    for (SymbolId t : time_ids) {
      const auto a_t = e.times->row(t);
      double acc = 0.0;
      for (std::size_t r4 = 0; r4 < r; ++r4) acc += a_t[r4] * ge[i * r + r4];
      total += acc;
    }
    gs[i] = total;
  }
  return out;
}

inline std::vector<SymbolId> all_times(const EpisodicModel& e) {
  std::vector<SymbolId> out(e.times->rows());
  for (SymbolId t = 0; t < out.size(); ++t) out[t] = t;
  return out;
}

struct ReplayConfig {
  std::size_t samples_per_time = 20;
  Beta beta = Beta::softmax(5.0);
  TrainConfig train;
  std::uint64_t seed = 1;
};

/// For each scheduled time, samples triples from the episodic decoder and
/// fits the semantic model on them. The episodic model is only read.
inline TrainReport replay_teach(const EpisodicModel& e, SemanticModel& s,
                                std::span<const SymbolId> schedule, const ReplayConfig& cfg) {
  if (!(e.entities->registry() == s.entities->registry()) ||
      !(e.predicates->registry() == s.predicates->registry()))
    throw DataError("episodic and semantic models must share entity and predicate registries");
  if (schedule.empty()) throw UsageError("replay schedule is empty");

  TrainReport total;
  for (std::size_t step = 0; step < schedule.size(); ++step) {
    const SymbolId t = schedule[step];
    const auto triples = recall_sample(e, t, cfg.beta, cfg.samples_per_time,
                                       splitmix64(cfg.seed ^ splitmix64(step)));
    FactStore store;
    store.entities = s.entities->registry();
    store.predicates = s.predicates->registry();
    for (const auto& tr : triples) store.triples.insert(tr);
    TrainConfig tc = cfg.train;
    tc.seed = splitmix64(cfg.train.seed ^ splitmix64(step + 0x5eed));
    const auto r = fit(s, store, tc);
    total.epoch_losses.insert(total.epoch_losses.end(), r.epoch_losses.begin(),
                              r.epoch_losses.end());
    total.final_loss = r.final_loss;
  }
  return total;
}

namespace detail {

inline double logit(double tau) { return std::log(tau / (1.0 - tau)); }

inline std::size_t distill_joint(const JointDistribution& joint, double tau,
                                 KnowledgeGraphStore& store) {
  if (!(tau > 0.0 && tau < 1.0)) throw UsageError("threshold must lie in (0, 1)");
  const double cut = logit(tau);
  std::size_t added = 0;
  for (const auto& e : joint.entries)
    if (e.score >= cut && store.insert({e.s, e.p, e.o}, triple_probability(e.score))) ++added;
  return added;
}

}  // namespace detail

inline constexpr double kDefaultDistillThreshold = 0.9;

/// Inserts every triple with sig(theta) >= tau into `store`; returns the
/// number of new or strengthened entries.
inline std::size_t distill_explicit(const SemanticModel& m, double tau, KnowledgeGraphStore& store,
                                    std::size_t cap = kEnumerationCap) {
  return detail::distill_joint(semantic_triples(m, Beta::softmax(0.0), cap), tau, store);
}

inline std::size_t distill_explicit(const EpisodicModel& m, SymbolId t, double tau,
                                    KnowledgeGraphStore& store,
                                    std::size_t cap = kEnumerationCap) {
  return detail::distill_joint(decode_triples(m, m.times->row(t), Beta::softmax(0.0), cap), tau,
                               store);
}

/// Re-binds every engram of `source` in `target` under the same label.
inline std::size_t copy_engrams(const EpisodicModel& source, EpisodicModel& target) {
  if (source.config.rank != target.config.rank)
    throw DimensionError("engram copy needs equal ranks (" + std::to_string(source.config.rank) +
                         " vs " + std::to_string(target.config.rank) + ")");
  std::size_t copied = 0;
  for (const auto& g : source.engrams()) {
    bind_engram(target, g.trace, source.times->registry().name(g.time));
    ++copied;
  }
  return copied;
}

}  // namespace engram

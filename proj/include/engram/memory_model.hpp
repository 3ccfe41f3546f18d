#pragma once

// Symbol registries, embedding tables, the episodic/semantic Tucker models
// and the engram store.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "engram/error.hpp"
#include "engram/random.hpp"
#include "engram/tensor_core.hpp"

namespace engram {

using SymbolId = std::uint32_t;

enum class SymbolKind { entity = 0, predicate = 1, time = 2 };

inline const char* kind_name(SymbolKind k) {
  switch (k) {
    case SymbolKind::entity: return "entity";
    case SymbolKind::predicate: return "predicate";
    case SymbolKind::time: return "time";
  }
  return "unknown";
}

/// Bijection between names and dense ids 0..size()-1.
class SymbolRegistry {
public:
  explicit SymbolRegistry(SymbolKind kind = SymbolKind::entity) : kind_(kind) {}

  SymbolKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return names_.size(); }
  bool contains(SymbolId id) const noexcept { return id < names_.size(); }

  /// Returns the existing id or appends a new one.
  SymbolId intern(std::string_view name) {
    if (name.empty()) throw UsageError(std::string(kind_name(kind_)) + " name must be nonempty");
    if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
    const auto id = static_cast<SymbolId>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
  }

  std::optional<SymbolId> find(std::string_view name) const {
    if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
    return std::nullopt;
  }

  SymbolId require(std::string_view name) const {
    if (auto id = find(name)) return *id;
    throw DataError(std::string("unknown ") + kind_name(kind_) + " '" + std::string(name) + "'");
  }

  const std::string& name(SymbolId id) const {
    check(id);
    return names_[id];
  }

  const std::vector<std::string>& names() const noexcept { return names_; }

  void check(SymbolId id) const {
    if (!contains(id))
      throw DataError(std::string("unknown ") + kind_name(kind_) + " id " + std::to_string(id));
  }

  bool operator==(const SymbolRegistry& o) const { return kind_ == o.kind_ && names_ == o.names_; }

private:
  SymbolKind kind_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, SymbolId> ids_;
};

/// One latent row per registered symbol. New rows are initialised from
/// (init_seed, id) alone, so a reloaded table extends exactly like the
/// original would have.
class EmbeddingTable {
public:
  EmbeddingTable(SymbolKind kind, std::size_t rank, bool nonnegative, std::uint64_t init_seed)
      : registry_(kind), rank_(rank), nonnegative_(nonnegative), init_seed_(init_seed) {
    if (rank == 0) throw UsageError("embedding rank must be positive");
  }

  SymbolKind kind() const noexcept { return registry_.kind(); }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t rows() const noexcept { return registry_.size(); }
  bool nonnegative() const noexcept { return nonnegative_; }
  std::uint64_t init_seed() const noexcept { return init_seed_; }
  const SymbolRegistry& registry() const noexcept { return registry_; }

  /// Idempotent: an existing name keeps its id and row.
  SymbolId add(std::string_view name) {
    const auto before = registry_.size();
    const SymbolId id = registry_.intern(name);
    if (registry_.size() != before) {
      std::uint64_t state = splitmix64(init_seed_ ^ splitmix64(id));
      for (std::size_t r = 0; r < rank_; ++r) {
        state = splitmix64(state);
        const double u = to_unit(state);
        data_.push_back(nonnegative_ ? 0.1 * u : -0.1 + 0.2 * u);
      }
    }
    return id;
  }

  /// Registers a name that must be new and sets its row to `row` exactly.
  SymbolId append(std::string_view name, std::span<const double> row) {
    if (registry_.find(name))
      throw DataError(std::string(kind_name(kind())) + " '" + std::string(name) +
                      "' is already registered");
    check_row(row);
    const SymbolId id = registry_.intern(name);
    data_.insert(data_.end(), row.begin(), row.end());
    return id;
  }

  std::span<const double> row(SymbolId id) const {
    registry_.check(id);
    return {data_.data() + std::size_t{id} * rank_, rank_};
  }
  std::span<double> row(SymbolId id) {
    registry_.check(id);
    return {data_.data() + std::size_t{id} * rank_, rank_};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  /// Replaces all rows; used by checkpoint loading.
  void assign(std::vector<std::string> names, std::vector<double> values) {
    if (values.size() != names.size() * rank_)
      throw DataError(std::string(kind_name(kind())) + " table: expected " +
                      std::to_string(names.size() * rank_) + " values, got " +
                      std::to_string(values.size()));
    SymbolRegistry reg(kind());
    for (const auto& n : names) reg.intern(n);
    if (reg.size() != names.size())
      throw DataError(std::string("duplicate names in ") + kind_name(kind()) + " registry");
    registry_ = std::move(reg);
    data_ = std::move(values);
  }

  /// Column sum over all rows: the latent a one-hot-of-ones index input maps to.
  LatentVector column_sum() const {
    LatentVector out(rank_, 0.0);
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t r = 0; r < rank_; ++r) out[r] += data_[i * rank_ + r];
    return out;
  }

  void check_row(std::span<const double> row) const {
    if (row.size() != rank_)
      throw DimensionError(std::string(kind_name(kind())) + " vector length " +
                           std::to_string(row.size()) + " does not match rank " +
                           std::to_string(rank_));
    if (!all_finite(row)) throw DataError("latent vector has non-finite entries");
    if (nonnegative_)
      for (double x : row)
        if (x < 0.0) throw DataError("negative latent entry in nonnegative mode");
  }

private:
  SymbolRegistry registry_;
  std::size_t rank_;
  bool nonnegative_;
  std::uint64_t init_seed_;
  std::vector<double> data_;
};

struct ModelConfig {
  std::size_t rank = 4;
  bool nonnegative = false;
  double beta_default = 5.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (rank == 0) throw UsageError("rank must be >= 1");
    if (!(beta_default >= 0.0)) throw UsageError("beta must be >= 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// A stored memory trace: the time index and its latent pattern.
struct Engram {
  SymbolId time = 0;
  LatentVector trace;
};

namespace detail {

inline std::uint64_t table_seed(std::uint64_t seed, SymbolKind kind, std::uint64_t role) {
  return splitmix64(seed ^ splitmix64(0x7461626c65ULL + static_cast<std::uint64_t>(kind) * 131 +
                                      role * 7919));
}

// With rows of size ~0.1 a unit core sits so close to the saddle at zero
// that SGD needs thousands of steps to leave it; each extra mode costs
// another factor of the row scale.
inline double core_init_scale(std::size_t order) { return order == 3 ? 10.0 : 30.0; }

inline CoreTensor random_core(std::size_t order, const ModelConfig& cfg, std::uint64_t role) {
  CoreTensor core(order, cfg.rank);
  Rng rng(splitmix64(cfg.seed ^ splitmix64(0x636f7265ULL + order * 17 + role * 7919)));
  const double scale = core_init_scale(order);
  for (double& g : core.values()) {
    const double u = uniform01(rng);
    g = scale * (cfg.nonnegative ? u : 2.0 * u - 1.0);
  }
  return core;
}

}  // namespace detail

inline constexpr std::uint64_t kEpisodicRole = 0;
inline constexpr std::uint64_t kSemanticRole = 1;

/// Order-3 Tucker model of "facts we know".
struct SemanticModel {
  static constexpr std::size_t order = 3;

  ModelConfig config;
  std::shared_ptr<EmbeddingTable> entities;
  std::shared_ptr<EmbeddingTable> predicates;
  CoreTensor core;

  /// Fresh model with its own tables and a seeded random core.
  static SemanticModel create(const ModelConfig& cfg) {
    cfg.validate();
    return create(cfg,
                  std::make_shared<EmbeddingTable>(SymbolKind::entity, cfg.rank, cfg.nonnegative,
                                                   detail::table_seed(cfg.seed, SymbolKind::entity,
                                                                      kSemanticRole)),
                  std::make_shared<EmbeddingTable>(
                      SymbolKind::predicate, cfg.rank, cfg.nonnegative,
                      detail::table_seed(cfg.seed, SymbolKind::predicate, kSemanticRole)));
  }

  /// Model over existing (possibly shared) tables.
  static SemanticModel create(const ModelConfig& cfg, std::shared_ptr<EmbeddingTable> ents,
                              std::shared_ptr<EmbeddingTable> preds) {
    cfg.validate();
    SemanticModel m{cfg, std::move(ents), std::move(preds),
                    detail::random_core(order, cfg, kSemanticRole)};
    m.check_consistency();
    return m;
  }

  const EmbeddingTable& table(std::size_t mode) const {
    switch (mode) {
      case 0:
      case 2: return *entities;
      case 1: return *predicates;
      default: throw UsageError("semantic model has no " + std::string(mode_name(mode)) + " slot");
    }
  }
  EmbeddingTable& table(std::size_t mode) {
    return const_cast<EmbeddingTable&>(std::as_const(*this).table(mode));
  }

  void check_consistency() const {
    if (!entities || !predicates) throw DataError("semantic model is missing embedding tables");
    if (entities->rank() != config.rank || predicates->rank() != config.rank ||
        core.rank() != config.rank || core.order() != order)
      throw DimensionError("semantic model: core rank does not match embedding width");
  }
};

/// Order-4 Tucker model of "facts we remember", with the engram store.
struct EpisodicModel {
  static constexpr std::size_t order = 4;

  ModelConfig config;
  std::shared_ptr<EmbeddingTable> entities;
  std::shared_ptr<EmbeddingTable> predicates;
  std::shared_ptr<EmbeddingTable> times;
  CoreTensor core;
  /// Time ids bound through bind_engram, in binding order.
  std::vector<SymbolId> engram_times;

  static EpisodicModel create(const ModelConfig& cfg) {
    cfg.validate();
    auto table = [&](SymbolKind k) {
      return std::make_shared<EmbeddingTable>(k, cfg.rank, cfg.nonnegative,
                                              detail::table_seed(cfg.seed, k, kEpisodicRole));
    };
    return create(cfg, table(SymbolKind::entity), table(SymbolKind::predicate),
                  table(SymbolKind::time));
  }

  static EpisodicModel create(const ModelConfig& cfg, std::shared_ptr<EmbeddingTable> ents,
                              std::shared_ptr<EmbeddingTable> preds,
                              std::shared_ptr<EmbeddingTable> ts) {
    cfg.validate();
    EpisodicModel m{cfg, std::move(ents), std::move(preds), std::move(ts),
                    detail::random_core(order, cfg, kEpisodicRole), {}};
    m.check_consistency();
    return m;
  }

  const EmbeddingTable& table(std::size_t mode) const {
    switch (mode) {
      case 0:
      case 2: return *entities;
      case 1: return *predicates;
      case 3: return *times;
      default: throw UsageError("episodic model has no mode " + std::to_string(mode + 1));
    }
  }
  EmbeddingTable& table(std::size_t mode) {
    return const_cast<EmbeddingTable&>(std::as_const(*this).table(mode));
  }

  std::size_t engram_count() const noexcept { return engram_times.size(); }

  Engram engram(std::size_t i) const {
    const SymbolId t = engram_times.at(i);
    const auto row = times->row(t);
    return {t, LatentVector(row.begin(), row.end())};
  }

  std::vector<Engram> engrams() const {
    std::vector<Engram> out;
    for (std::size_t i = 0; i < engram_times.size(); ++i) out.push_back(engram(i));
    return out;
  }

  void check_consistency() const {
    if (!entities || !predicates || !times) throw DataError("episodic model is missing tables");
    if (entities->rank() != config.rank || predicates->rank() != config.rank ||
        times->rank() != config.rank || core.rank() != config.rank || core.order() != order)
      throw DimensionError("episodic model: core rank does not match embedding width");
    for (SymbolId t : engram_times) times->registry().check(t);
  }
};

/// theta = g^s x1 a_s x2 a_p x3 a_o
inline double score_semantic(const SemanticModel& m, SymbolId s, SymbolId p, SymbolId o) {
  return contract3(m.core, m.entities->row(s), m.predicates->row(p), m.entities->row(o));
}

inline double score_episodic(const EpisodicModel& m, SymbolId s, SymbolId p, SymbolId o,
                             SymbolId t) {
  return contract4(m.core, m.entities->row(s), m.predicates->row(p), m.entities->row(o),
                   m.times->row(t));
}

/// Logistic link, evaluated without overflow for either sign.
inline double triple_probability(double theta) {
  if (theta >= 0.0) return 1.0 / (1.0 + std::exp(-theta));
  const double e = std::exp(theta);
  return e / (1.0 + e);
}

/// Binds `h` to a fresh time index. Without a label the index is named
/// "engram:<n>" with the smallest unused n.
inline Engram bind_engram(EpisodicModel& m, std::span<const double> h,
                          std::optional<std::string> label = std::nullopt) {
  m.times->check_row(h);
  if (!label) {
    std::size_t n = m.engram_times.size();
    while (m.times->registry().find("engram:" + std::to_string(n))) ++n;
    label = "engram:" + std::to_string(n);
  }
  const SymbolId t = m.times->append(*label, h);
  m.engram_times.push_back(t);
  return {t, LatentVector(h.begin(), h.end())};
}

/// RESCAL-style object activation h_o = G^p a_s; `slice` is rank x rank, row-major.
inline LatentVector rescal_contract(std::span<const double> slice, std::span<const double> a_s) {
  const std::size_t rank = a_s.size();
  if (slice.size() != rank * rank)
    throw DimensionError("predicate slice has " + std::to_string(slice.size()) +
                         " entries, expected " + std::to_string(rank * rank));
  LatentVector h(rank, 0.0);
  for (std::size_t i = 0; i < rank; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < rank; ++j) acc += slice[i * rank + j] * a_s[j];
    h[i] = acc;
  }
  return h;
}

}  // namespace engram

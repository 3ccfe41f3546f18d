#pragma once

#include <compare>
#include <set>

#include "engram/memory_model.hpp"

namespace engram {

struct Triple {
  SymbolId s = 0, p = 0, o = 0;
  auto operator<=>(const Triple&) const = default;
};

struct Quadruple {
  SymbolId s = 0, p = 0, o = 0, t = 0;
  auto operator<=>(const Quadruple&) const = default;
  Triple triple() const { return {s, p, o}; }
};

/// Observed facts with set semantics, plus the registries their ids index into.
struct FactStore {
  SymbolRegistry entities{SymbolKind::entity};
  SymbolRegistry predicates{SymbolKind::predicate};
  SymbolRegistry times{SymbolKind::time};
  std::set<Triple> triples;
  std::set<Quadruple> quadruples;

  bool empty() const noexcept { return triples.empty() && quadruples.empty(); }

  bool add(std::string_view s, std::string_view p, std::string_view o) {
    const auto si = entities.intern(s);
    const auto pi = predicates.intern(p);
    const auto oi = entities.intern(o);
    return triples.insert({si, pi, oi}).second;
  }

  bool add(std::string_view s, std::string_view p, std::string_view o, std::string_view t) {
    const auto si = entities.intern(s);
    const auto pi = predicates.intern(p);
    const auto oi = entities.intern(o);
    return quadruples.insert({si, pi, oi, times.intern(t)}).second;
  }

  bool operator==(const FactStore&) const = default;
};

/// Registers every symbol of `store` in the model's tables, in store id order.
/// Afterwards store ids and model ids coincide for models built from scratch.
template <typename Model>
void register_symbols(Model& model, const FactStore& store) {
  for (const auto& n : store.entities.names()) model.entities->add(n);
  for (const auto& n : store.predicates.names()) model.predicates->add(n);
  if constexpr (Model::order == 4)
    for (const auto& n : store.times.names()) model.times->add(n);
}

}  // namespace engram

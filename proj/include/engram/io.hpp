#pragma once

// Fact ingestion (TSV) and model checkpoints.
//
// Checkpoint layout, all integers and doubles little-endian:
//   "ENGRAMCK"                 8 bytes magic
//   header length              uint64
//   header                     compact JSON (config, registries, array table)
//   arrays                     IEEE-754 doubles, in header "arrays" order

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "engram/consolidation.hpp"
#include "engram/facts.hpp"
#include "engram/memory_model.hpp"

namespace engram {

// --- facts ------------------------------------------------------------------

/// Reads "subject<TAB>predicate<TAB>object[<TAB>time]" lines. Lines starting
/// with '#' and blank lines are skipped. Three columns go to the triple set,
/// four to the quadruple set.
inline FactStore ingest(std::istream& in, FactStore store = {}) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string_view> cols;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    cols.clear();
    std::string_view rest = line;
    for (;;) {
      const auto tab = rest.find('\t');
      cols.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (cols.size() != 3 && cols.size() != 4)
      throw DataError("line " + std::to_string(lineno) + ": expected 3 or 4 tab-separated columns, got " +
                      std::to_string(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      if (cols[c].empty())
        throw DataError("line " + std::to_string(lineno) + ": column " + std::to_string(c + 1) +
                        " is empty");
    if (cols.size() == 3)
      store.add(cols[0], cols[1], cols[2]);
    else
      store.add(cols[0], cols[1], cols[2], cols[3]);
  }
  return store;
}

inline FactStore ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fact file '" + path + "'");
  return ingest(in);
}

// --- checkpoints ------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "ENGRAMCK";

/// Everything a CLI session persists between invocations.
struct MemoryState {
  ModelConfig config;
  std::optional<EpisodicModel> episodic;
  std::optional<SemanticModel> semantic;
  KnowledgeGraphStore knowledge;

  const EmbeddingTable& entity_table() const {
    if (episodic) return *episodic->entities;
    if (semantic) return *semantic->entities;
    throw DataError("memory holds no model");
  }
  const EmbeddingTable& predicate_table() const {
    if (episodic) return *episodic->predicates;
    if (semantic) return *semantic->predicates;
    throw DataError("memory holds no model");
  }
  bool shares_embeddings() const {
    return episodic && semantic && episodic->entities == semantic->entities &&
           episodic->predicates == semantic->predicates;
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

struct ArrayWriter {
  nlohmann::json index = nlohmann::json::array();
  std::string payload;

  void add(const std::string& name, std::span<const double> values) {
    index.push_back({{"name", name}, {"length", values.size()}});
    for (double v : values) put_u64(payload, std::bit_cast<std::uint64_t>(v));
  }
};

inline nlohmann::json table_meta(const std::string& name, const EmbeddingTable& t) {
  return {{"name", name}, {"kind", kind_name(t.kind())}, {"init_seed", t.init_seed()}};
}

}  // namespace detail

inline std::string encode_checkpoint(const MemoryState& state) {
  if (!state.episodic && !state.semantic) throw UsageError("nothing to save: no model present");
  const auto& cfg = state.config;
  if (state.episodic && state.semantic &&
      (!(state.episodic->entities->registry() == state.semantic->entities->registry()) ||
       !(state.episodic->predicates->registry() == state.semantic->predicates->registry())))
    throw DataError("episodic and semantic models disagree on entity/predicate registries");

  nlohmann::json header;
  header["format"] = "engram-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = {{"rank", cfg.rank},
                      {"nonnegative", cfg.nonnegative},
                      {"beta_default", cfg.beta_default},
                      {"seed", cfg.seed}};
  header["registries"] = {
      {"entity", state.entity_table().registry().names()},
      {"predicate", state.predicate_table().registry().names()},
      {"time", state.episodic ? state.episodic->times->registry().names()
                              : std::vector<std::string>{}}};

  detail::ArrayWriter arrays;
  nlohmann::json tables = nlohmann::json::array();
  if (state.episodic) {
    const auto& e = *state.episodic;
    tables.push_back(detail::table_meta("episodic.entity", *e.entities));
    tables.push_back(detail::table_meta("episodic.predicate", *e.predicates));
    tables.push_back(detail::table_meta("episodic.time", *e.times));
    arrays.add("episodic.entity", e.entities->data());
    arrays.add("episodic.predicate", e.predicates->data());
    arrays.add("episodic.time", e.times->data());
    arrays.add("episodic.core", e.core.values());
    header["episodic"] = {{"present", true}, {"engrams", e.engram_times}};
  } else {
    header["episodic"] = {{"present", false}};
  }
  if (state.semantic) {
    const auto& s = *state.semantic;
    const bool shared = state.shares_embeddings();
    if (!shared) {
      tables.push_back(detail::table_meta("semantic.entity", *s.entities));
      tables.push_back(detail::table_meta("semantic.predicate", *s.predicates));
      arrays.add("semantic.entity", s.entities->data());
      arrays.add("semantic.predicate", s.predicates->data());
    }
    arrays.add("semantic.core", s.core.values());
    header["semantic"] = {{"present", true}, {"shared_embeddings", shared}};
  } else {
    header["semantic"] = {{"present", false}};
  }
  nlohmann::json kg = nlohmann::json::array();
  std::vector<double> confidence;
  for (const auto& [t, c] : state.knowledge.facts()) {
    kg.push_back({t.s, t.p, t.o});
    confidence.push_back(c);
  }
  arrays.add("knowledge_graph.confidence", confidence);
  header["knowledge_graph"] = kg;
  header["tables"] = tables;
  header["arrays"] = arrays.index;

  const std::string text = header.dump();
  std::string out(kCheckpointMagic);
  detail::put_u64(out, text.size());
  out += text;
  out += arrays.payload;
  return out;
}

inline MemoryState decode_checkpoint(std::string_view bytes) {
  auto corrupt = [](const std::string& why) { return DataError("corrupt checkpoint: " + why); };
  if (bytes.size() < 16 || bytes.substr(0, 8) != kCheckpointMagic)
    throw corrupt("missing magic bytes");
  const std::uint64_t header_len = detail::get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw corrupt("header length exceeds file size (truncated?)");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& ex) {
    throw corrupt(std::string("unreadable header: ") + ex.what());
  }

  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw DataError("checkpoint version " + std::to_string(version) +
                      " is not supported (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");

    // array payloads
    std::map<std::string, std::vector<double>> arrays;
    std::size_t at = 16 + header_len;
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto length = a.at("length").get<std::uint64_t>();
      if (length > (bytes.size() - at) / 8)
        throw corrupt("array '" + name + "' declares " + std::to_string(length) +
                      " values but the file is too short (truncated?)");
      std::vector<double> values(length);
      for (std::size_t i = 0; i < length; ++i, at += 8)
        values[i] = std::bit_cast<double>(detail::get_u64(bytes, at));
      arrays.emplace(name, std::move(values));
    }
    if (at != bytes.size())
      throw corrupt(std::to_string(bytes.size() - at) + " trailing bytes after declared arrays");
    auto take = [&](const std::string& name) {
      auto it = arrays.find(name);
      if (it == arrays.end()) throw corrupt("missing array '" + name + "'");
      return std::move(it->second);
    };

    MemoryState state;
    const auto& c = header.at("config");
    state.config.rank = c.at("rank").get<std::size_t>();
    state.config.nonnegative = c.at("nonnegative").get<bool>();
    state.config.beta_default = c.at("beta_default").get<double>();
    state.config.seed = c.at("seed").get<std::uint64_t>();
    state.config.validate();

    const auto& regs = header.at("registries");
    std::map<std::string, std::uint64_t> seeds;
    for (const auto& t : header.at("tables"))
      seeds[t.at("name").get<std::string>()] = t.at("init_seed").get<std::uint64_t>();

    auto load_table = [&](const std::string& name, SymbolKind kind, const char* registry) {
      if (!seeds.contains(name)) throw corrupt("missing table metadata for '" + name + "'");
      auto t = std::make_shared<EmbeddingTable>(kind, state.config.rank, state.config.nonnegative,
                                                seeds[name]);
      t->assign(regs.at(registry).get<std::vector<std::string>>(), take(name));
      return t;
    };

    const std::size_t r = state.config.rank;
    if (header.at("episodic").at("present").get<bool>()) {
      EpisodicModel e{state.config,
                      load_table("episodic.entity", SymbolKind::entity, "entity"),
                      load_table("episodic.predicate", SymbolKind::predicate, "predicate"),
                      load_table("episodic.time", SymbolKind::time, "time"),
                      CoreTensor(4, r, take("episodic.core")),
                      header.at("episodic").at("engrams").get<std::vector<SymbolId>>()};
      e.check_consistency();
      state.episodic = std::move(e);
    }
    if (header.at("semantic").at("present").get<bool>()) {
      const bool shared = header.at("semantic").at("shared_embeddings").get<bool>();
      if (shared && !state.episodic) throw corrupt("shared semantic embeddings without episodic model");
      SemanticModel s{
          state.config,
          shared ? state.episodic->entities
                 : load_table("semantic.entity", SymbolKind::entity, "entity"),
          shared ? state.episodic->predicates
                 : load_table("semantic.predicate", SymbolKind::predicate, "predicate"),
          CoreTensor(3, r, take("semantic.core"))};
      s.check_consistency();
      state.semantic = std::move(s);
    }
    if (!state.episodic && !state.semantic) throw corrupt("no model present");

    const auto kg = header.at("knowledge_graph");
    const auto conf = take("knowledge_graph.confidence");
    if (conf.size() != kg.size()) throw corrupt("knowledge graph confidence count mismatch");
    for (std::size_t i = 0; i < kg.size(); ++i) {
      const Triple t{kg[i].at(0).get<SymbolId>(), kg[i].at(1).get<SymbolId>(),
                     kg[i].at(2).get<SymbolId>()};
      state.entity_table().registry().check(t.s);
      state.predicate_table().registry().check(t.p);
      state.entity_table().registry().check(t.o);
      state.knowledge.insert(t, conf[i]);
    }
    return state;
  } catch (const nlohmann::json::exception& ex) {
    throw corrupt(std::string("malformed header: ") + ex.what());
  } catch (const DimensionError& ex) {
    throw corrupt(ex.what());
  }
}

inline void save_checkpoint(const MemoryState& state, const std::string& path) {
  const std::string bytes = encode_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

inline MemoryState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace engram

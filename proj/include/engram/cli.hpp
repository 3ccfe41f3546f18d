#pragma once

// Batch command line over the memory engine. Kept in the header so tests
// can drive it in-process with captured streams.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "engram/consolidation.hpp"
#include "engram/io.hpp"
#include "engram/perception.hpp"
#include "engram/query.hpp"
#include "engram/trainer.hpp"

namespace engram::cli {

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Parses a slot name: s/subject, p/predicate, o/object, t/time.
inline std::size_t parse_slot(const std::string& name) {
  if (name == "s" || name == "subject") return 0;
  if (name == "p" || name == "predicate") return 1;
  if (name == "o" || name == "object") return 2;
  if (name == "t" || name == "time") return 3;
  throw UsageError("unknown slot '" + name + "' (use s, p, o or t)");
}

inline std::pair<std::string, std::string> split_assignment(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
    throw UsageError("expected slot=value, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

inline LatentVector parse_vector(const std::string& text) {
  LatentVector v;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    try {
      v.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw UsageError("bad number '" + field + "' in vector '" + text + "'");
    }
  }
  return v;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ','))
    if (!field.empty()) out.push_back(field);
  return out;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::string format = "tsv";

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("ENGRAM_SEED")) {
      try {
        return std::stoull(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("ENGRAM_SEED is not an integer: '") + env + "'");
      }
    }
    return 1;
  }
  bool json() const { return format == "json"; }
};

class Runner {
public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(std::vector<std::string> args) {
    CLI::App app{"Tensor memory engine: episodic and semantic Tucker memories", "engram"};
    app.require_subcommand(1);
    setup(app);
    try {
      std::reverse(args.begin(), args.end());
      app.parse(args);
    } catch (const CLI::CallForHelp&) {
      out_ << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n";
      return 1;
    }
    try {
      action_();
      return 0;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << "\n";
      return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return static_cast<int>(ErrorKind::data);
    }
  }

private:
  // option storage
  Common common_;
  std::string facts_, model_, out_path_, report_, memory_ = "auto";
  std::size_t rank_ = 4, top_ = 10;
  TrainConfig train_;
  bool nonnegative_ = false, linear_ = false, memorable_ = false, normalize_ = false, fresh_ = false;
  std::optional<double> beta_;
  std::vector<std::string> fixes_, marginalize_, clamps_;
  std::string free_, time_, entity_, symbol_, kind_ = "entity", input_, encoder_ = "identity";
  std::string mode_, times_, target_, source_ = "semantic";
  std::size_t samples_ = 0;
  double threshold_ = kDefaultDistillThreshold;
  std::function<void()> action_;

  std::ostream& out_;
  std::ostream& err_;

  void add_common(CLI::App* sub) {
    sub->add_option("--seed", common_.seed, "Random seed (falls back to ENGRAM_SEED, then 1)");
    sub->add_option("--format", common_.format, "Output format")
        ->check(CLI::IsMember({"tsv", "json"}));
  }

  void add_training(CLI::App* sub) {
    sub->add_option("--epochs", train_.epochs, "Training epochs")->capture_default_str();
    sub->add_option("--lr", train_.learning_rate, "SGD learning rate")->capture_default_str();
    sub->add_option("--negatives", train_.negatives, "Negatives per positive")->capture_default_str();
    sub->add_option("--l2", train_.l2, "L2 weight")->capture_default_str();
    sub->add_option("--decay", train_.decay, "Learning-rate decay")->capture_default_str();
    sub->add_option("--corrupt", train_.corruption, "Negative sampling: object or triple")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, Corruption>{{"object", Corruption::object_or_time},
                                              {"triple", Corruption::whole_triple}}))
        ->default_str("object");
  }

  void setup(CLI::App& app) {
    auto* ingest = app.add_subcommand("ingest", "Parse a fact file and report its contents");
    ingest->add_option("--facts", facts_, "TSV fact file")->required();
    add_common(ingest);
    ingest->callback([this] { action_ = [this] { do_ingest(); }; });

    auto* train = app.add_subcommand("train", "Fit memories from a fact file");
    train->add_option("--facts", facts_, "TSV fact file")->required();
    train->add_option("--rank", rank_, "Latent rank")->capture_default_str();
    train->add_flag("--nonnegative", nonnegative_, "Nonnegative parameters (enables marginalization)");
    train->add_option("--memory", memory_, "Which memory to train")
        ->check(CLI::IsMember({"auto", "episodic", "semantic", "both"}));
    train->add_option("--out", out_path_, "Checkpoint path")->required();
    train->add_option("--report", report_, "Write the per-epoch JSON report here instead of stdout");
    add_training(train);
    add_common(train);
    train->callback([this] { action_ = [this] { do_train(); }; });

    auto* query = app.add_subcommand("query", "Distribution over one free slot");
    query->add_option("--model", model_, "Checkpoint")->required();
    query->add_option("--memory", memory_, "episodic, semantic or auto")
        ->check(CLI::IsMember({"auto", "episodic", "semantic"}));
    query->add_option("--fix", fixes_, "slot=symbol");
    query->add_option("--free", free_, "Slot to predict")->required();
    query->add_option("--marginalize", marginalize_, "Slot to sum out");
    query->add_option("--clamp", clamps_, "slot=v1,v2,...");
    query->add_option("--beta", beta_, "Inverse temperature");
    query->add_flag("--linear", linear_, "Linear scores (nonnegative models)");
    query->add_option("--top", top_, "Rows to print")->capture_default_str();
    query->add_option("--sample", samples_, "Draw this many samples instead of ranking");
    add_common(query);
    query->callback([this] { action_ = [this] { do_query(); }; });

    auto* recall = app.add_subcommand("recall", "Triples remembered at a time index");
    recall->add_option("--model", model_, "Checkpoint")->required();
    recall->add_option("--time", time_, "Time label")->required();
    recall->add_option("--beta", beta_, "Inverse temperature");
    recall->add_option("--top", top_, "Rows to print")->capture_default_str();
    recall->add_option("--sample", samples_, "Draw this many triples instead of ranking");
    add_common(recall);
    recall->callback([this] { action_ = [this] { do_recall(); }; });

    auto* profile = app.add_subcommand("profile", "What semantic memory knows about an entity");
    profile->add_option("--model", model_, "Checkpoint")->required();
    profile->add_option("--entity", entity_, "Entity name")->required();
    profile->add_option("--beta", beta_, "Inverse temperature");
    profile->add_option("--top", top_, "Rows to print")->capture_default_str();
    add_common(profile);
    profile->callback([this] { action_ = [this] { do_profile(); }; });

    auto* associate = app.add_subcommand("associate", "Most similar symbols by cosine");
    associate->add_option("--model", model_, "Checkpoint")->required();
    associate->add_option("--kind", kind_, "entity, predicate or time")
        ->check(CLI::IsMember({"entity", "predicate", "time"}));
    associate->add_option("--symbol", symbol_, "Symbol name")->required();
    associate->add_option("--top", top_, "Rows to print")->capture_default_str();
    add_common(associate);
    associate->callback([this] { action_ = [this] { do_associate(); }; });

    auto* perceive = app.add_subcommand("perceive", "Encode sensory vectors and decode them");
    perceive->add_option("--model", model_, "Checkpoint")->required();
    perceive->add_option("--input", input_, "Comma-separated vectors, one per line")->required();
    perceive->add_option("--encoder", encoder_, "'identity' or an encoder JSON file");
    perceive->add_flag("--memorable", memorable_, "Bind each input as a new engram");
    perceive->add_option("--beta", beta_, "Inverse temperature");
    perceive->add_option("--top", top_, "Triples per input")->capture_default_str();
    perceive->add_option("--out", out_path_, "Checkpoint to write (default: --model)");
    add_common(perceive);
    perceive->callback([this] { action_ = [this] { do_perceive(); }; });

    auto* consolidate = app.add_subcommand("consolidate", "Derive semantic memory from episodic");
    consolidate->add_option("--model", model_, "Checkpoint")->required();
    consolidate->add_option("--mode", mode_, "marginalize, replay or copy")
        ->required()
        ->check(CLI::IsMember({"marginalize", "replay", "copy"}));
    consolidate->add_option("--times", times_, "Comma-separated time labels (default: all)");
    consolidate->add_flag("--normalize", normalize_, "Divide the marginalized core by |T|");
    consolidate->add_option("--samples", samples_, "Replay samples per time (default 20)");
    consolidate->add_option("--beta", beta_, "Replay inverse temperature");
    consolidate->add_flag("--fresh", fresh_, "Replay into a new semantic model");
    consolidate->add_option("--target", target_, "Checkpoint receiving copied engrams");
    consolidate->add_option("--out", out_path_, "Checkpoint to write (default: --model)");
    add_training(consolidate);
    add_common(consolidate);
    consolidate->callback([this] { action_ = [this] { do_consolidate(); }; });

    auto* distill = app.add_subcommand("distill", "Store confident triples in the knowledge graph");
    distill->add_option("--model", model_, "Checkpoint")->required();
    distill->add_option("--source", source_, "semantic or episodic")
        ->check(CLI::IsMember({"semantic", "episodic"}));
    distill->add_option("--time", time_, "Time label (episodic source)");
    distill->add_option("--threshold", threshold_, "Minimum sig(theta)")->capture_default_str();
    distill->add_option("--out", out_path_, "Checkpoint to write (default: --model)");
    add_common(distill);
    distill->callback([this] { action_ = [this] { do_distill(); }; });

    auto* export_kg = app.add_subcommand("export-kg", "Write the knowledge graph as TSV");
    export_kg->add_option("--model", model_, "Checkpoint")->required();
    export_kg->add_option("--out", out_path_, "Output file (default: stdout)");
    add_common(export_kg);
    export_kg->callback([this] { action_ = [this] { do_export(); }; });
  }

  // --- helpers ---------------------------------------------------------------

  Beta beta_for(const MemoryState& st) const {
    if (linear_) return Beta::linear_scores();
    return Beta::softmax(beta_.value_or(st.config.beta_default));
  }

  std::string out_or_model() const { return out_path_.empty() ? model_ : out_path_; }

  const EpisodicModel& need_episodic(const MemoryState& st) const {
    if (!st.episodic) throw UsageError("checkpoint has no episodic memory");
    return *st.episodic;
  }
  const SemanticModel& need_semantic(const MemoryState& st) const {
    if (!st.semantic) throw UsageError("checkpoint has no semantic memory");
    return *st.semantic;
  }

  void emit_json(const nlohmann::json& j) { out_ << j.dump() << "\n"; }

  void print_triples(const std::vector<ScoredTriple>& triples, const MemoryState& st,
                     const nlohmann::json& extra = nlohmann::json::object()) {
    const auto& ents = st.entity_table().registry();
    const auto& preds = st.predicate_table().registry();
    for (const auto& t : triples) {
      if (common_.json()) {
        nlohmann::json j = extra;
        j["subject"] = ents.name(t.s);
        j["predicate"] = preds.name(t.p);
        j["object"] = ents.name(t.o);
        j["probability"] = t.probability;
        j["score"] = t.score;
        emit_json(j);
      } else {
        for (auto it = extra.begin(); it != extra.end(); ++it)
          out_ << (it->is_string() ? it->get<std::string>() : it->dump()) << '\t';
        out_ << ents.name(t.s) << '\t' << preds.name(t.p) << '\t' << ents.name(t.o) << '\t'
             << fmt_double(t.probability) << '\t' << fmt_double(t.score) << '\n';
      }
    }
  }

  std::vector<SymbolId> time_list(const EpisodicModel& e) const {
    if (times_.empty()) return all_times(e);
    std::vector<SymbolId> out;
    for (const auto& name : split_list(times_)) out.push_back(e.times->registry().require(name));
    return out;
  }

  // --- subcommands -----------------------------------------------------------

  void do_ingest() {
    const FactStore store = ingest_file(facts_);
    const std::vector<std::pair<std::string, std::size_t>> rows{
        {"entities", store.entities.size()},     {"predicates", store.predicates.size()},
        {"times", store.times.size()},           {"triples", store.triples.size()},
        {"quadruples", store.quadruples.size()}};
    if (common_.json()) {
      nlohmann::json j;
      for (const auto& [k, v] : rows) j[k] = v;
      emit_json(j);
    } else {
      for (const auto& [k, v] : rows) out_ << k << '\t' << v << '\n';
    }
  }

  void do_train() {
    const FactStore store = ingest_file(facts_);
    ModelConfig cfg;
    cfg.rank = rank_;
    cfg.nonnegative = nonnegative_;
    cfg.seed = common_.resolved_seed();
    cfg.validate();
    train_.seed = cfg.seed;

    bool want_episodic = memory_ == "episodic" || memory_ == "both";
    bool want_semantic = memory_ == "semantic" || memory_ == "both";
    if (memory_ == "auto") {
      want_episodic = !store.quadruples.empty();
      want_semantic = !store.triples.empty();
    }
    if (!want_episodic && !want_semantic) throw DataError("fact file holds no facts");

    std::ofstream report_file;
    if (!report_.empty()) {
      report_file.open(report_);
      if (!report_file) throw DataError("cannot write report '" + report_ + "'");
    }
    std::ostream& report = report_.empty() ? out_ : report_file;
    auto emit = [&](const char* which, const TrainReport& r) {
      for (std::size_t i = 0; i < r.epoch_losses.size(); ++i)
        report << nlohmann::json{{"memory", which}, {"epoch", i + 1}, {"loss", r.epoch_losses[i]}}.dump()
               << "\n";
    };

    MemoryState st;
    st.config = cfg;
    if (want_episodic) {
      auto e = EpisodicModel::create(cfg);
      register_symbols(e, store);
      emit("episodic", fit(e, store, train_));
      st.episodic = std::move(e);
    }
    if (want_semantic) {
      // a quadruple-only file still teaches its time-free content
      FactStore facts = store;
      if (facts.triples.empty())
        for (const auto& q : facts.quadruples) facts.triples.insert(q.triple());
      auto s = SemanticModel::create(cfg);
      register_symbols(s, facts);
      TrainConfig tc = train_;
      tc.seed = splitmix64(train_.seed ^ kSemanticRole);
      emit("semantic", fit(s, facts, tc));
      st.semantic = std::move(s);
    }
    save_checkpoint(st, out_path_);
  }

  void do_query() {
    const MemoryState st = load_checkpoint(model_);
    std::map<std::size_t, SlotSpec> slots;
    auto claim = [&](std::size_t slot, SlotSpec spec) {
      if (!slots.emplace(slot, std::move(spec)).second)
        throw UsageError(std::string("slot ") + mode_name(slot) + " given more than once");
    };
    claim(parse_slot(free_), Free{});
    std::vector<std::pair<std::size_t, std::string>> fixed;
    for (const auto& f : fixes_) {
      auto [slot, name] = split_assignment(f);
      fixed.emplace_back(parse_slot(slot), name);
    }
    for (const auto& m : marginalize_) claim(parse_slot(m), Marginalized{});
    for (const auto& c : clamps_) {
      auto [slot, text] = split_assignment(c);
      claim(parse_slot(slot), Clamped{parse_vector(text)});
    }

    bool time_used = slots.contains(3);
    for (const auto& [slot, name] : fixed) time_used = time_used || slot == 3;
    std::string memory = memory_;
    if (memory == "auto") memory = (time_used || !st.semantic) ? "episodic" : "semantic";

    auto run = [&](const auto& model) {
      constexpr std::size_t order = std::decay_t<decltype(model)>::order;
      for (const auto& [slot, name] : fixed) {
        if (slot >= order) throw UsageError(std::string("semantic memory has no time slot"));
        claim(slot, Fixed{model.table(slot).registry().require(name)});
      }
      SlotPattern pattern;
      for (std::size_t i = 0; i < order; ++i) {
        auto it = slots.find(i);
        if (it == slots.end())
          throw UsageError(std::string("slot ") + mode_name(i) + " is not specified");
        pattern.slots.push_back(it->second);
      }
      if (slots.size() > order) throw UsageError("semantic memory has no time slot");
      const Beta beta = beta_for(st);
      const QueryResult res = pattern.has_marginalized() && beta.linear
                                  ? marginal_distribution(model, pattern, beta)
                                  : conditional_distribution(model, pattern, beta);
      const auto& reg = model.table(res.free_slot).registry();
      if (samples_ > 0) {
        Rng rng(common_.resolved_seed());
        for (SymbolId id : sample_from(res, samples_, rng)) {
          if (common_.json()) emit_json({{"symbol", reg.name(id)}, {"id", id}});
          else out_ << reg.name(id) << '\n';
        }
        return;
      }
      const auto order_idx = res.ranking();
      for (std::size_t k = 0; k < std::min(top_, order_idx.size()); ++k) {
        const std::size_t i = order_idx[k];
        const SymbolId id = res.candidates[i];
        if (common_.json())
          emit_json({{"symbol", reg.name(id)},
                     {"id", id},
                     {"probability", res.probabilities[i]},
                     {"score", res.scores[i]}});
        else
          out_ << reg.name(id) << '\t' << fmt_double(res.probabilities[i]) << '\t'
               << fmt_double(res.scores[i]) << '\n';
      }
    };
    if (memory == "episodic") run(need_episodic(st));
    else run(need_semantic(st));
  }

  void do_recall() {
    const MemoryState st = load_checkpoint(model_);
    const auto& e = need_episodic(st);
    const SymbolId t = e.times->registry().require(time_);
    const Beta beta = beta_for(st);
    if (samples_ > 0) {
      const auto& ents = e.entities->registry();
      const auto& preds = e.predicates->registry();
      for (const auto& tr : recall_sample(e, t, beta, samples_, common_.resolved_seed())) {
        if (common_.json())
          emit_json({{"subject", ents.name(tr.s)}, {"predicate", preds.name(tr.p)},
                     {"object", ents.name(tr.o)}});
        else
          out_ << ents.name(tr.s) << '\t' << preds.name(tr.p) << '\t' << ents.name(tr.o) << '\n';
      }
      return;
    }
    print_triples(recall(e, t, beta, top_), st);
  }

  void do_profile() {
    const MemoryState st = load_checkpoint(model_);
    const auto& s = need_semantic(st);
    const SymbolId i = s.entities->registry().require(entity_);
    print_triples(entity_profile(s, i, beta_for(st), top_), st);
  }

  void do_associate() {
    const MemoryState st = load_checkpoint(model_);
    const EmbeddingTable* table = nullptr;
    if (kind_ == "entity") table = &st.entity_table();
    else if (kind_ == "predicate") table = &st.predicate_table();
    else table = need_episodic(st).times.get();
    const SymbolId i = table->registry().require(symbol_);
    const std::size_t k = std::min(top_, table->rows() > 0 ? table->rows() - 1 : 0);
    for (const auto& [id, sim] : associate(*table, i, k)) {
      if (common_.json())
        emit_json({{"symbol", table->registry().name(id)}, {"id", id}, {"similarity", sim}});
      else
        out_ << table->registry().name(id) << '\t' << fmt_double(sim) << '\n';
    }
  }

  void do_perceive() {
    MemoryState st = load_checkpoint(model_);
    if (!st.episodic) throw UsageError("checkpoint has no episodic memory");
    auto& e = *st.episodic;
    Encoder enc;
    if (encoder_ == "identity") {
      enc = Encoder::identity(e.config.rank, e.config.nonnegative);
    } else {
      std::ifstream in(encoder_);
      if (!in) throw DataError("cannot open encoder '" + encoder_ + "'");
      try {
        enc = encoder_from_json(nlohmann::json::parse(in));
      } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("bad encoder file: ") + ex.what());
      }
    }
    const auto inputs = read_sensory_file(input_);
    const Beta beta = beta_for(st);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto p = perceive(enc, e, inputs[i], memorable_, beta, top_);
      nlohmann::json extra{{"input", i + 1}};
      if (p.engram) extra["engram"] = e.times->registry().name(p.engram->time);
      print_triples(p.triples, st, extra);
    }
    if (memorable_) save_checkpoint(st, out_or_model());
  }

  void do_consolidate() {
    MemoryState st = load_checkpoint(model_);
    if (!st.episodic) throw UsageError("checkpoint has no episodic memory");
    auto& e = *st.episodic;
    const auto times = time_list(e);
    nlohmann::json summary{{"mode", mode_}, {"times", times.size()}};
    if (mode_ == "marginalize") {
      st.semantic = marginalize_time(e, times, normalize_);
    } else if (mode_ == "replay") {
      if (fresh_ || !st.semantic) {
        auto s = SemanticModel::create(st.config);
        for (const auto& n : e.entities->registry().names()) s.entities->add(n);
        for (const auto& n : e.predicates->registry().names()) s.predicates->add(n);
        st.semantic = std::move(s);
      }
      ReplayConfig rc;
      rc.samples_per_time = samples_ > 0 ? samples_ : 20;
      rc.beta = beta_for(st);
      rc.seed = common_.resolved_seed();
      rc.train = train_;
      rc.train.seed = rc.seed;
      const auto r = replay_teach(e, *st.semantic, times, rc);
      summary["final_loss"] = r.final_loss;
    } else {
      if (target_.empty()) throw UsageError("--mode copy needs --target");
      MemoryState target = load_checkpoint(target_);
      if (!target.episodic) throw UsageError("target checkpoint has no episodic memory");
      summary["copied"] = copy_engrams(e, *target.episodic);
      save_checkpoint(target, target_);
      emit_summary(summary);
      return;
    }
    save_checkpoint(st, out_or_model());
    emit_summary(summary);
  }

  void emit_summary(const nlohmann::json& summary) {
    if (common_.json()) {
      emit_json(summary);
      return;
    }
    for (auto it = summary.begin(); it != summary.end(); ++it)
      out_ << it.key() << '\t'
           << (it->is_number_float() ? fmt_double(it->get<double>())
                                     : (it->is_string() ? it->get<std::string>() : it->dump()))
           << '\n';
  }

  void do_distill() {
    MemoryState st = load_checkpoint(model_);
    std::size_t added = 0;
    if (source_ == "semantic") {
      added = distill_explicit(need_semantic(st), threshold_, st.knowledge);
    } else {
      const auto& e = need_episodic(st);
      if (time_.empty()) throw UsageError("--source episodic needs --time");
      added = distill_explicit(e, e.times->registry().require(time_), threshold_, st.knowledge);
    }
    save_checkpoint(st, out_or_model());
    emit_summary({{"added", added}, {"total", st.knowledge.size()}});
  }

  void do_export() {
    const MemoryState st = load_checkpoint(model_);
    if (out_path_.empty()) {
      st.knowledge.write_tsv(out_, st.entity_table().registry(), st.predicate_table().registry());
      return;
    }
    std::ofstream f(out_path_);
    if (!f) throw DataError("cannot write '" + out_path_ + "'");
    st.knowledge.write_tsv(f, st.entity_table().registry(), st.predicate_table().registry());
  }
};

/// Runs one CLI invocation; `args` excludes the program name.
inline int cli_main(std::vector<std::string> args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  Runner runner(out, err);
  return runner.run(std::move(args));
}

}  // namespace engram::cli

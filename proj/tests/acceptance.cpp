// Acceptance gate: runs every criterion at full size and prints one
// PASS/FAIL line each. Exit status is the number of failures.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "engram/consolidation.hpp"
#include "engram/io.hpp"
#include "engram/perception.hpp"
#include "engram/query.hpp"
#include "engram/trainer.hpp"
#include "oracles.hpp"

using namespace engram;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1: Tucker scores against nested loops ---------------------------------

Outcome tucker_oracle() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    oracle::Gen gen(seed);
    const std::size_t rank = 2 + seed % 3;
    const std::size_t ne = 1 + gen.index(10), np = 1 + gen.index(10), nt = 1 + gen.index(10);
    const auto s = oracle::semantic_model(rank, ne, np, false, seed);
    const auto e = oracle::episodic_model(rank, ne, np, nt, false, seed);
    for (SymbolId a = 0; a < ne; ++a)
      for (SymbolId p = 0; p < np; ++p)
        for (SymbolId o = 0; o < ne; ++o) {
          worst = std::max(worst, std::abs(score_semantic(s, a, p, o) -
                                           oracle::nested3(s.core, s.entities->row(a),
                                                           s.predicates->row(p), s.entities->row(o))));
          ++checked;
          for (SymbolId t = 0; t < nt; ++t) {
            worst = std::max(worst, std::abs(score_episodic(e, a, p, o, t) -
                                             oracle::nested4(e.core, e.entities->row(a),
                                                             e.predicates->row(p),
                                                             e.entities->row(o), e.times->row(t))));
            ++checked;
          }
        }
  }
  return {worst <= 1e-12, fmt("max abs error %.3g over %zu scores (tol 1e-12)", worst, checked)};
}

// --- 2: marginalization by ones vectors --------------------------------------

Outcome sum_product() {
  double worst = 0.0;
  std::size_t queries = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    oracle::Gen gen(1000 + seed);
    const std::size_t rank = 2 + seed % 3;
    const std::size_t ne = 2 + gen.index(5), np = 2 + gen.index(4), nt = 2 + gen.index(4);
    const auto m = oracle::episodic_model(rank, ne, np, nt, true, 1000 + seed);
    const std::array<std::size_t, 4> vocab{ne, np, ne, nt};
    const std::array<SymbolId, 4> fixed{static_cast<SymbolId>(gen.index(ne)),
                                        static_cast<SymbolId>(gen.index(np)),
                                        static_cast<SymbolId>(gen.index(ne)),
                                        static_cast<SymbolId>(gen.index(nt))};
    for (std::size_t free = 0; free < 4; ++free) {
      // every nonempty subset of the remaining slots is marginalized
      for (unsigned mask = 1; mask < 16; ++mask) {
        if (mask & (1u << free)) continue;
        std::vector<SlotSpec> slots(4);
        for (std::size_t i = 0; i < 4; ++i) {
          if (i == free) slots[i] = Free{};
          else if (mask & (1u << i)) slots[i] = Marginalized{};
          else slots[i] = Fixed{fixed[i]};
        }
        const auto r = marginal_distribution(m, SlotPattern{slots}, Beta::linear_scores());
        std::vector<double> expect(vocab[free], 0.0);
        std::array<SymbolId, 4> ids{};
        std::function<void(std::size_t)> walk = [&](std::size_t i) {
          if (i == 4) {
            expect[ids[free]] += oracle::nested4(m.core, m.entities->row(ids[0]),
                                                 m.predicates->row(ids[1]),
                                                 m.entities->row(ids[2]), m.times->row(ids[3]));
            return;
          }
          if (i == free || (mask & (1u << i))) {
            for (SymbolId v = 0; v < vocab[i]; ++v) {
              ids[i] = v;
              walk(i + 1);
            }
          } else {
            ids[i] = fixed[i];
            walk(i + 1);
          }
        };
        walk(0);
        double total = 0.0;
        for (double x : expect) total += x;
        for (std::size_t c = 0; c < expect.size(); ++c) {
          worst = std::max(worst, oracle::rel_err(r.scores[c], expect[c]));
          worst = std::max(worst, oracle::rel_err(r.probabilities[c], expect[c] / total));
        }
        ++queries;
      }
    }
  }
  return {worst <= 1e-9, fmt("max rel error %.3g over %zu marginal queries (tol 1e-9)", worst, queries)};
}

// --- 3: time marginalization --------------------------------------------------

Outcome consolidation_equivalence() {
  double worst = 0.0;
  bool exact = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    oracle::Gen gen(2000 + seed);
    const std::size_t ne = 2 + gen.index(9), np = 1 + gen.index(10), nt = 1 + gen.index(20);
    const auto e = oracle::episodic_model(2 + seed % 3, ne, np, nt, true, 2000 + seed);
    const auto ts = all_times(e);
    const auto s = marginalize_time(e, ts, false);
    const auto n = marginalize_time(e, ts, true);
    for (std::size_t i = 0; i < s.core.size(); ++i)
      exact = exact && n.core.values()[i] == s.core.values()[i] / static_cast<double>(nt);
    for (SymbolId a = 0; a < ne; ++a)
      for (SymbolId p = 0; p < np; ++p)
        for (SymbolId o = 0; o < ne; ++o) {
          double sum = 0.0;
          for (SymbolId t : ts)
            sum += oracle::nested4(e.core, e.entities->row(a), e.predicates->row(p),
                                   e.entities->row(o), e.times->row(t));
          worst = std::max(worst, oracle::rel_err(score_semantic(s, a, p, o), sum));
        }
  }
  return {worst <= 1e-10 && exact,
          fmt("max rel error %.3g (tol 1e-10); normalized core exact: %s", worst, exact ? "yes" : "no")};
}

// --- 4: gradients -------------------------------------------------------------

Outcome gradients() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = oracle::semantic_model(3, 5, 3, false, 3000 + seed);
    const std::vector<LabeledFact> sb{labeled(Triple{0, 1, 2}, 1.0), labeled(Triple{3, 1, 2}, 0.0),
                                      labeled(Triple{2, 0, 4}, 0.0)};
    worst = std::max(worst, oracle::worst_gradient_error(s, sb, 1e-3));
    auto e = oracle::episodic_model(3, 4, 2, 3, false, 3000 + seed);
    for (double& g : e.core.values()) g *= 0.5;
    const std::vector<LabeledFact> eb{labeled(Quadruple{0, 1, 2, 0}, 1.0),
                                      labeled(Quadruple{0, 1, 3, 2}, 0.0),
                                      labeled(Quadruple{1, 0, 1, 1}, 1.0)};
    worst = std::max(worst, oracle::worst_gradient_error(e, eb, 1e-3));
  }
  return {worst <= 1e-4, fmt("worst relative gap %.3g over entity, predicate, time and core "
                             "gradients (tol 1e-4)", worst)};
}

// --- 5: sampling --------------------------------------------------------------

Outcome sampling() {
  auto m = oracle::semantic_model(3, 4, 1, false, 4001);
  const auto pat = SlotPattern::semantic(Fixed{0}, Fixed{0}, Free{});
  const auto flat = sample(m, pat, Beta::softmax(0.0), 40000, 17);
  std::map<SymbolId, int> counts;
  for (auto c : flat) ++counts[c];
  double worst = 0.0;
  for (SymbolId c = 0; c < 4; ++c) worst = std::max(worst, std::abs(counts[c] / 40000.0 - 0.25));

  // object 2 scores strictly highest for (0, 0, .)
  auto d = oracle::semantic_model(2, 4, 1, false, 4002);
  d.core = CoreTensor::superdiagonal(3, 2);
  for (SymbolId e = 0; e < 4; ++e) {
    d.entities->row(e)[0] = e == 2 ? 2.0 : (e == 0 ? 1.0 : 0.0);
    d.entities->row(e)[1] = 0.0;
  }
  d.predicates->row(0)[0] = 1.0;
  const auto sharp = sample(d, pat, Beta::softmax(50.0), 40000, 17);
  const double dominant = std::count(sharp.begin(), sharp.end(), 2u) / 40000.0;
  const bool repeatable = flat == sample(m, pat, Beta::softmax(0.0), 40000, 17) &&
                          sharp == sample(d, pat, Beta::softmax(50.0), 40000, 17);
  return {worst <= 0.02 && dominant >= 0.999 && repeatable,
          fmt("beta=0 max |freq-0.25| = %.4f (tol 0.02); beta=50 dominant freq %.5f (min 0.999); "
              "repeatable: %s",
              worst, dominant, repeatable ? "yes" : "no")};
}

// --- 6: engram round trip -----------------------------------------------------

Outcome engram_roundtrip() {
  // bit-exact: perceive then recall equals decoding with the trace clamped
  auto m = oracle::episodic_model(4, 5, 3, 2, false, 5001);
  const std::vector<double> u{0.3, -0.7, 0.2, 0.9};
  const auto p = perceive(Encoder::identity(4), m, u, true, Beta::softmax(5.0), 75);
  bool exact = p.engram.has_value();
  const auto joint = decode_triples(m, u, Beta::softmax(5.0));
  const auto again = recall(m, p.engram->time, Beta::softmax(5.0), 75);
  for (std::size_t i = 0; exact && i < again.size(); ++i) {
    const auto& a = again[i];
    const auto& ref = joint.at(a.s, a.p, a.o);
    const auto clamped = conditional_distribution(
        m, SlotPattern::episodic(Fixed{a.s}, Fixed{a.p}, Free{}, Clamped{u}), Beta::softmax(5.0));
    exact = a.score == ref.score && a.probability == ref.probability &&
            a.score == clamped.scores[a.o] && p.triples[i].score == a.score;
  }

  // toy model with one dominant triple per time
  FactStore store;
  for (auto n : {"jack", "mary", "max", "munich"}) store.entities.intern(n);
  for (auto n : {"likes", "lives_in"}) store.predicates.intern(n);
  store.add("jack", "likes", "mary", "mon");
  store.add("max", "lives_in", "munich", "tue");
  auto toy = EpisodicModel::create({4, false, 5.0, 5});
  register_symbols(toy, store);
  TrainConfig cfg;
  cfg.epochs = 800;
  cfg.seed = 5;
  cfg.corruption = Corruption::whole_triple;
  fit(toy, store, cfg);
  const auto star = toy.times->row(toy.times->registry().require("mon"));
  const auto seen = perceive(Encoder::identity(4), toy, std::vector<double>(star.begin(), star.end()),
                             true, Beta::softmax(5.0), 1);
  const auto& top = seen.triples.front();
  const bool dominant = top.s == 0 && top.p == 0 && top.o == 1;
  return {exact && dominant,
          fmt("recall of new engram equals clamped decoding bit for bit: %s; top-1 at t* is "
              "%s %s %s (expected jack likes mary)",
              exact ? "yes" : "no", toy.entities->registry().name(top.s).c_str(),
              toy.predicates->registry().name(top.p).c_str(),
              toy.entities->registry().name(top.o).c_str())};
}

// --- 7: replay ----------------------------------------------------------------

Outcome replay() {
  FactStore store;
  for (auto n : {"jack", "mary", "max", "munich", "bavaria"}) store.entities.intern(n);
  for (auto n : {"likes", "lives_in"}) store.predicates.intern(n);
  for (int t = 0; t < 10; ++t) store.add("jack", "likes", "mary", "day" + std::to_string(t));
  auto e = EpisodicModel::create({4, false, 5.0, 7});
  register_symbols(e, store);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.seed = 7;
  cfg.corruption = Corruption::whole_triple;
  fit(e, store, cfg);

  auto s = SemanticModel::create(e.config);
  for (const auto& n : e.entities->registry().names()) s.entities->add(n);
  for (const auto& n : e.predicates->registry().names()) s.predicates->add(n);
  const double before = triple_probability(score_semantic(s, 0, 0, 1));
  ReplayConfig rc;
  rc.seed = 7;
  const auto schedule = all_times(e);
  replay_teach(e, s, schedule, rc);
  const double after = triple_probability(score_semantic(s, 0, 0, 1));
  return {after >= 0.9, fmt("sig(theta) of jack likes mary: %.4f before, %.4f after replay (min 0.9)",
                            before, after)};
}

// --- 8: materialization -------------------------------------------------------

Outcome materialization() {
  int wins = 0;
  std::string margins;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto g = oracle::block_graph(2, 5);
    auto m = SemanticModel::create({4, false, 5.0, seed});
    register_symbols(m, g.store);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 0.01;
    cfg.seed = seed;
    fit(m, g.store, cfg);
    const std::vector<LabeledFact> held{labeled(g.held_out, 1.0)};
    const auto neg = filtered_corruptions(m, held[0], g.store, 100, seed);
    const double margin = evaluate_materialization(m, std::span<const LabeledFact>(held),
                                                   std::span<const LabeledFact>(neg))
                              .margin;
    wins += margin > 0.0;
    margins += fmt(seed == 1 ? "%.2f" : " %.2f", margin);
  }
  return {wins >= 9, fmt("held-out fact beats the corruption mean in %d/10 seeds (min 9); "
                         "margins: %s", wins, margins.c_str())};
}

// --- 9: CLI determinism -------------------------------------------------------

int shell(const std::string& cmd) {
  const int s = std::system(cmd.c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome cli_determinism() {
  const std::string bin = ENGRAM_CLI_PATH;
  const fs::path root = fs::temp_directory_path() / "engram_acceptance";
  fs::remove_all(root);
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"a", "b"}) {
    const fs::path dir = root / name;
    fs::create_directories(dir);
    std::ofstream(dir / "toy.tsv") << "jack\tlikes\tmary\tmon\n"
                                      "max\tlives_in\tmunich\tmon\n"
                                      "mary\tlikes\tjack\ttue\n"
                                      "max\tlikes\tmary\ttue\n"
                                      "munich\tpart_of\tbavaria\twed\n";
    const std::string d = dir.string() + "/";
    const std::vector<std::pair<std::string, std::string>> steps{
        {"ingest", "ingest --facts " + d + "toy.tsv"},
        {"train", "train --facts " + d + "toy.tsv --rank 4 --nonnegative --epochs 200 --seed 1 --out " +
                      d + "m.ck"},
        {"consolidate", "consolidate --model " + d + "m.ck --mode marginalize --out " + d + "s.ck"},
        {"query", "query --model " + d + "s.ck --fix s=max --marginalize p --free o --linear"},
        {"sample", "query --model " + d + "m.ck --fix s=jack --fix p=likes --fix t=mon --free o "
                   "--sample 20 --seed 3"}};
    std::map<std::string, std::string> out;
    for (const auto& [step, args] : steps) {
      const int code = shell(bin + " " + args + " > " + d + step + ".out 2> " + d + step + ".err");
      if (code != 0) {
        fs::remove_all(root);
        return {false, fmt("step '%s' exited with %d", step.c_str(), code)};
      }
      out[step] = slurp(dir / (step + ".out"));
    }
    out["m.ck"] = slurp(dir / "m.ck");
    out["s.ck"] = slurp(dir / "s.ck");
    runs.push_back(std::move(out));
  }
  std::string differing;
  for (const auto& [k, v] : runs[0])
    if (runs[1].at(k) != v) differing += " " + k;

  const std::string ck = runs[0].at("s.ck");
  const bool round_trip = encode_checkpoint(decode_checkpoint(ck)) == ck;
  const auto query_lines = std::count(runs[0].at("query").begin(), runs[0].at("query").end(), '\n');
  fs::remove_all(root);
  return {differing.empty() && round_trip && query_lines > 0,
          fmt("two runs byte-identical: %s; checkpoint save/load/save identical: %s",
              differing.empty() ? "yes" : ("no, differs in" + differing).c_str(),
              round_trip ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::tuple<const char*, double, Outcome (*)()>> criteria{
      {"Tucker scores match nested-loop evaluators", 5.0, tucker_oracle},
      {"ones-vector marginals match enumeration", 10.0, sum_product},
      {"time marginalization equals the sum over times", 0.0, consolidation_equivalence},
      {"analytic gradients match finite differences", 0.0, gradients},
      {"sampling frequencies", 0.0, sampling},
      {"engram round trip", 0.0, engram_roundtrip},
      {"replay teaches the dominant triple", 30.0, replay},
      {"probabilistic materialization", 0.0, materialization},
      {"end-to-end CLI determinism", 0.0, cli_determinism},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, limit, fn] : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit > 0.0 && secs > limit) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s limit]", limit);
    }
    failures += !o.pass;
    std::printf("[%s] %d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", index - failures, criteria.size());
  return failures;
}

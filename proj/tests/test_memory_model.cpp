#include <gtest/gtest.h>

#include <cmath>

#include "engram/memory_model.hpp"
#include "oracles.hpp"

using namespace engram;

TEST(SymbolRegistry, InternIsIdempotent) {
  SymbolRegistry reg(SymbolKind::entity);
  EXPECT_EQ(reg.intern("jack"), 0u);
  EXPECT_EQ(reg.intern("jack"), 0u);
  EXPECT_EQ(reg.intern("mary"), 1u);
  EXPECT_EQ(reg.name(1), "mary");
  EXPECT_EQ(reg.require("jack"), 0u);
  EXPECT_THROW(reg.require("max"), DataError);
  EXPECT_THROW(reg.intern(""), UsageError);
}

TEST(EmbeddingTable, RowsTrackRegistrations) {
  EmbeddingTable t(SymbolKind::entity, 3, false, 99);
  EXPECT_EQ(t.add("a"), 0u);
  const auto first = std::vector<double>(t.row(0).begin(), t.row(0).end());
  t.add("b");
  t.add("a");
  t.add("c");
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.data().size(), 9u);
  EXPECT_EQ(std::vector<double>(t.row(0).begin(), t.row(0).end()), first);
}

TEST(EmbeddingTable, InitRanges) {
  EmbeddingTable s(SymbolKind::entity, 8, false, 1), n(SymbolKind::entity, 8, true, 1);
  for (int i = 0; i < 50; ++i) {
    s.add("x" + std::to_string(i));
    n.add("x" + std::to_string(i));
  }
  for (double x : s.data()) EXPECT_TRUE(x >= -0.1 && x <= 0.1);
  for (double x : n.data()) EXPECT_TRUE(x >= 0.0 && x <= 0.1);
}

TEST(EmbeddingTable, RowInitDependsOnlyOnSeedAndId) {
  EmbeddingTable a(SymbolKind::entity, 4, false, 5), b(SymbolKind::entity, 4, false, 5);
  a.add("x");
  a.add("y");
  b.add("p");
  b.add("q");
  EXPECT_TRUE(std::equal(a.row(1).begin(), a.row(1).end(), b.row(1).begin()));
}

TEST(ScoreSemantic, SuperdiagonalCase) {
  auto m = SemanticModel::create({2, false, 5.0, 1});
  m.entities->add("s");
  m.entities->add("o");
  m.predicates->add("p");
  m.core = CoreTensor::superdiagonal(3, 2);
  for (auto id : {0u, 1u}) {
    m.entities->row(id)[0] = 1.0;
    m.entities->row(id)[1] = 0.0;
  }
  m.predicates->row(0)[0] = 1.0;
  m.predicates->row(0)[1] = 0.0;
  EXPECT_EQ(score_semantic(m, 0, 0, 1), 1.0);
}

TEST(ScoreSemantic, MatchesOracleAndIsLinear) {
  auto m = oracle::semantic_model(3, 5, 3, false, 11);
  for (SymbolId s = 0; s < 5; ++s)
    for (SymbolId p = 0; p < 3; ++p)
      for (SymbolId o = 0; o < 5; ++o)
        EXPECT_NEAR(score_semantic(m, s, p, o),
                    oracle::nested3(m.core, m.entities->row(s), m.predicates->row(p),
                                    m.entities->row(o)),
                    1e-12);
  const double before = score_semantic(m, 0, 1, 2);
  for (double& x : m.entities->row(0)) x *= 2.0;
  EXPECT_NEAR(score_semantic(m, 0, 1, 2), 2.0 * before, 1e-12);
  EXPECT_THROW(score_semantic(m, 9, 0, 0), DataError);
}

TEST(ScoreEpisodic, SuperdiagonalOracleLinearity) {
  auto m = oracle::episodic_model(3, 4, 2, 3, false, 12);
  for (SymbolId t = 0; t < 3; ++t)
    EXPECT_NEAR(score_episodic(m, 1, 0, 3, t),
                oracle::nested4(m.core, m.entities->row(1), m.predicates->row(0),
                                m.entities->row(3), m.times->row(t)),
                1e-12);
  const double before = score_episodic(m, 1, 0, 3, 2);
  for (double& x : m.entities->row(1)) x *= 2.0;
  EXPECT_NEAR(score_episodic(m, 1, 0, 3, 2), 2.0 * before, 1e-12);

  auto d = EpisodicModel::create({2, false, 5.0, 1});
  d.entities->add("a");
  d.predicates->add("p");
  d.times->add("t");
  d.core = CoreTensor::superdiagonal(4, 2);
  for (auto* tab : {d.entities.get(), d.predicates.get(), d.times.get()}) {
    tab->row(0)[0] = 1.0;
    tab->row(0)[1] = 0.0;
  }
  EXPECT_EQ(score_episodic(d, 0, 0, 0, 0), 1.0);
  EXPECT_THROW(score_episodic(d, 0, 0, 0, 1), DataError);
}

TEST(TripleProbability, Basics) {
  EXPECT_EQ(triple_probability(0.0), 0.5);
  EXPECT_GE(triple_probability(50.0), 1.0 - 1e-20);
  EXPECT_GT(triple_probability(-800.0), -1.0);  // no NaN
  oracle::Gen gen(3);
  for (int i = 0; i < 100; ++i) {
    const double th = gen.uniform(-30, 30);
    EXPECT_NEAR(triple_probability(th) + triple_probability(-th), 1.0, 1e-15);
  }
}

TEST(BindEngram, ExactTraceAndFreshIds) {
  auto m = oracle::episodic_model(3, 4, 2, 2, false, 13);
  const LatentVector h{0.3, -0.2, 0.7};
  const auto g1 = bind_engram(m, h);
  const auto g2 = bind_engram(m, h, "tomorrow");
  EXPECT_NE(g1.time, g2.time);
  EXPECT_EQ(m.engram_count(), 2u);
  EXPECT_EQ(m.times->registry().name(g2.time), "tomorrow");
  EXPECT_EQ(m.engram(0).trace, h);  // bit-identical
  for (SymbolId s = 0; s < 4; ++s)
    EXPECT_EQ(score_episodic(m, s, 1, 2, g1.time),
              contract4(m.core, m.entities->row(s), m.predicates->row(1), m.entities->row(2), h));
}

TEST(BindEngram, Errors) {
  auto m = oracle::episodic_model(3, 2, 1, 1, true, 14);
  EXPECT_THROW(bind_engram(m, LatentVector{1, 2}), DimensionError);
  EXPECT_THROW(bind_engram(m, LatentVector{0.1, -0.1, 0.2}), DataError);
  EXPECT_THROW(bind_engram(m, LatentVector{0.1, 0.1, 0.2}, "t0"), DataError);  // existing label
  EXPECT_EQ(m.engram_count(), 0u);
}

TEST(RescalContract, Cases) {
  const LatentVector a{0.5, -1.0, 2.0};
  std::vector<double> identity(9, 0.0);
  identity[0] = identity[4] = identity[8] = 1.0;
  EXPECT_EQ(rescal_contract(identity, a), a);
  EXPECT_EQ(rescal_contract(std::vector<double>(9, 0.0), a), LatentVector(3, 0.0));
  oracle::Gen gen(15);
  const auto slice = gen.vec(16), x = gen.vec(4);
  const auto h = rescal_contract(slice, x), ref = oracle::matvec(slice, x);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(h[i], ref[i], 1e-12);
  EXPECT_THROW(rescal_contract(std::vector<double>(8), x), DimensionError);
}

TEST(Properties, NonnegativeScoresAreNonnegative) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = oracle::episodic_model(3, 4, 3, 3, true, seed);
    for (SymbolId s = 0; s < 4; ++s)
      for (SymbolId o = 0; o < 4; ++o) EXPECT_GE(score_episodic(m, s, 1, o, 2), 0.0);
  }
}

TEST(Properties, RegistryTableConsistencyUnderInterleaving) {
  auto m = EpisodicModel::create({3, true, 5.0, 2});
  oracle::Gen gen(16);
  for (int i = 0; i < 200; ++i) {
    switch (gen.index(3)) {
      case 0: m.entities->add("e" + std::to_string(gen.index(30))); break;
      case 1: m.times->add("t" + std::to_string(gen.index(30))); break;
      default: bind_engram(m, gen.vec(3, 0.0, 1.0)); break;
    }
    ASSERT_EQ(m.entities->data().size(), m.entities->rows() * 3);
    ASSERT_EQ(m.times->data().size(), m.times->rows() * 3);
  }
  for (SymbolId i = 0; i < m.times->rows(); ++i)
    EXPECT_EQ(m.times->registry().require(m.times->registry().name(i)), i);
  EXPECT_NO_THROW(m.check_consistency());
}

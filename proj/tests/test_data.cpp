#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "scino/data/generate.hpp"
#include "scino/data/io.hpp"

using namespace scino;

namespace {

double column_var(const Dataset& ds, std::size_t c) {
  double m = 0.0, v = 0.0;
  for (std::size_t r = 0; r < ds.n(); ++r) m += ds.values(r, c);
  m /= static_cast<double>(ds.n());
  for (std::size_t r = 0; r < ds.n(); ++r) v += (ds.values(r, c) - m) * (ds.values(r, c) - m);
  return v / static_cast<double>(ds.n() - 1);
}

double column_cov(const Dataset& ds, std::size_t a, std::size_t b) {
  double ma = 0.0, mb = 0.0, v = 0.0;
  for (std::size_t r = 0; r < ds.n(); ++r) {
    ma += ds.values(r, a);
    mb += ds.values(r, b);
  }
  ma /= static_cast<double>(ds.n());
  mb /= static_cast<double>(ds.n());
  for (std::size_t r = 0; r < ds.n(); ++r) v += (ds.values(r, a) - ma) * (ds.values(r, b) - mb);
  return v / static_cast<double>(ds.n() - 1);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("scino_test_data_" + name);
}

}  // namespace

TEST(ErDag, SmallGraphCapsProbability) {
  GenConfig cfg;
  cfg.D = 2;
  cfg.expected_edges = 8.0;
  EXPECT_EQ(cfg.edge_probability(), 1.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    cfg.seed = s;
    EXPECT_EQ(gen_er_dag(cfg).edge_count(), 1u);
  }
}

TEST(ErDag, MeanEdgeCountMatchesBinomial) {
  GenConfig cfg;
  cfg.D = 10;
  const double p = 40.0 / 45.0;
  double total = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    cfg.seed = s;
    const Dag g = gen_er_dag(cfg);
    EXPECT_TRUE(g.is_acyclic());
    total += static_cast<double>(g.edge_count());
  }
  const double se = std::sqrt(45.0 * p * (1 - p) / 1000.0);
  EXPECT_NEAR(total / 1000.0, 40.0, 3 * se);
}

TEST(ErDag, RejectsTinyGraphs) {
  GenConfig cfg;
  cfg.D = 1;
  EXPECT_THROW(gen_er_dag(cfg), ConfigError);
}

TEST(GpAnm, EmptyGraphGivesIidNoise) {
  GenConfig cfg;
  cfg.N = 10000;
  cfg.noise_std = 1.5;
  const Dataset ds = sample_gp_anm(Dag(3), cfg);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(column_var(ds, c), 2.25, 0.05 * 2.25);
}

TEST(GpAnm, PriorVarianceIsKernelDiagonal) {
  Eigen::MatrixXd p(3, 1);
  p << -1.0, 0.2, 2.0;
  Rng rng(5);
  std::vector<double> sq(3, 0.0);
  const int draws = 4000;
  for (int k = 0; k < draws; ++k) {
    const auto f = detail::gp_draw(p, rng);
    for (std::size_t i = 0; i < 3; ++i) sq[i] += f[i] * f[i];
  }
  for (double s : sq) EXPECT_NEAR(s / draws, 1.0, 4 * std::sqrt(2.0 / draws));
}

TEST(GpAnm, IdenticalParentsGiveIdenticalValues) {
  Eigen::MatrixXd p(4, 2);
  p << 0.1, 0.3, -0.5, 1.0, 0.1, 0.3, 2.0, -1.0;
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto f = detail::gp_draw(p, rng);
    EXPECT_NEAR(f[0], f[2], 1e-3);
  }
}

TEST(GpAnm, SeededDeterminism) {
  GenConfig cfg;
  cfg.D = 5;
  cfg.N = 200;
  cfg.seed = 9;
  const Dag g = gen_er_dag(cfg);
  const Dataset a = sample_gp_anm(g, cfg), b = sample_gp_anm(g, cfg);
  EXPECT_TRUE(a.values.data() == b.values.data());
  EXPECT_TRUE(g == gen_er_dag(cfg));
  for (double v : a.values.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(LinearAnm, ChainCovariance) {
  Dag g(2);
  g.add_edge(0, 1);
  LinearSem sem{g, {0.0, 1.5, 0.0, 0.0}};
  GenConfig cfg;
  cfg.N = 10000;
  cfg.noise_std = 1.0;
  const Dataset ds = sample_linear_anm(sem, cfg);
  EXPECT_NEAR(column_var(ds, 0), 1.0, 0.05);
  EXPECT_NEAR(column_cov(ds, 0, 1), 1.5, 0.05 * 1.5);
  EXPECT_NEAR(column_var(ds, 1), 3.25, 0.05 * 3.25);
}

TEST(LinearAnm, ZeroWeightsGiveIndependentColumns) {
  Dag g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  GenConfig cfg;
  cfg.N = 10000;
  const Dataset ds = sample_linear_anm(g, 0.0, 0.0, cfg);
  EXPECT_NEAR(column_cov(ds, 0, 1), 0.0, 0.05);
  EXPECT_NEAR(column_cov(ds, 1, 2), 0.0, 0.05);
}

TEST(LinearAnm, WeightsAreSignSymmetricAndSeeded) {
  GenConfig cfg;
  cfg.D = 6;
  cfg.N = 10;
  cfg.seed = 4;
  const Dag g = gen_er_dag(cfg);
  const Dataset a = sample_linear_anm(g, 0.5, 2.0, cfg), b = sample_linear_anm(g, 0.5, 2.0, cfg);
  EXPECT_TRUE(a.values.data() == b.values.data());
  EXPECT_THROW(sample_linear_anm(g, 2.0, 1.0, cfg), ConfigError);
}

TEST(Physics, GraphMatchesFigure) {
  const Dag g = physics_dag();
  const std::set<std::pair<std::string, std::string>> expected{
      {"TSI", "SAT"}, {"TSI", "ER"}, {"TSI", "WS"}, {"SAT", "ER"},  {"WS", "SAT"},
      {"WS", "ER"},   {"ER", "RNFL"}, {"ER", "MC"},  {"RNFL", "MC"}, {"MC", "Wgt"}};
  std::set<std::pair<std::string, std::string>> got;
  for (auto [i, j] : g.edges()) got.emplace(g.names()[i], g.names()[j]);
  EXPECT_EQ(got, expected);
}

TEST(Physics, WeightsAndResidualNoise) {
  const PhysicsSample s = gen_physics(10000, 3);
  const Dag& g = s.graph;
  const std::size_t d = g.size();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double w = std::abs(s.weights[i * d + j]);
      if (g.has_edge(i, j)) {
        EXPECT_GE(w, 0.1);
        EXPECT_LE(w, 1.0);
      } else {
        EXPECT_EQ(w, 0.0);
      }
    }
  // Residual z = x - 2 sin(a) - a recomputed from the generated parents.
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 10000; ++r) {
      double a = 0.0;
      for (std::size_t p : g.parents(i)) a += s.weights[p * d + i] * (s.data.values(r, p) + 0.5);
      const double z = s.data.values(r, i) - 2.0 * std::sin(a) - a;
      if (g.parents(i).empty()) {
        EXPECT_EQ(z, s.data.values(r, i));
      }
      m += z;
      v += z * z;
    }
    EXPECT_NEAR(m / 10000, 0.0, 0.04);
    EXPECT_NEAR(v / 10000, 1.0, 0.05);
  }
}

TEST(Csv, RoundTripIsExact) {
  GenConfig cfg;
  cfg.D = 4;
  cfg.N = 50;
  const Dataset ds = sample_gp_anm(gen_er_dag(cfg), cfg);
  const auto path = temp_file("roundtrip.csv");
  save_csv(path.string(), ds);
  const Dataset back = load_csv(path.string());
  EXPECT_EQ(back.names, ds.names);
  EXPECT_TRUE(back.values.data() == ds.values.data());
  std::filesystem::remove(path);
}

TEST(Csv, HeaderOnlyIsEmptyDataset) {
  std::istringstream in("a,b,c\n");
  const Dataset ds = parse_csv(in);
  EXPECT_EQ(ds.n(), 0u);
  EXPECT_EQ(ds.d(), 3u);
}

TEST(Csv, RejectsMalformedInput) {
  std::istringstream dup("a,a\n1,2\n"), ragged("a,b\n1,2\n3\n"), text("a,b\n1,x\n"), inf("a\ninf\n"), empty("");
  EXPECT_THROW(parse_csv(dup), DataError);
  EXPECT_THROW(parse_csv(ragged), DataError);
  EXPECT_THROW(parse_csv(text), DataError);
  EXPECT_THROW(parse_csv(inf), DataError);
  EXPECT_THROW(parse_csv(empty), DataError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), DataError);
}

TEST(GraphJson, RoundTripAndValidation) {
  const Dag g = physics_dag();
  const Dag back = graph_from_json(graph_to_json(g));
  EXPECT_TRUE(back == g);
  EXPECT_EQ(back.names(), g.names());
  EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"nodes":["a","b"],"edges":[[0,1],[1,0]]})")), DataError);
  EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"nodes":["a"],"edges":[[0,0]]})")), DataError);
  EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"nodes":["a","b"]})")), DataError);
  EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"nodes":["a","b"],"edges":[[0,5]]})")), DataError);
}

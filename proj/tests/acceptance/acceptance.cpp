#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../metric_oracle.hpp"
#include "scino/data/generate.hpp"
#include "scino/ensemble/control.hpp"
#include "scino/metrics/metrics.hpp"
#include "scino/net/network.hpp"
#include "scino/ordering/deciduous.hpp"
#include "scino/ordering/order.hpp"
#include "scino/stein/probe.hpp"
#include "scino/stein/stein.hpp"

using namespace scino;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

double rel_err(double a, double b, double floor = 1e-6) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Reverse-mode parameter gradients and hyper-dual input derivatives against
// central differences.
Verdict derivatives() {
  HyperParams hp;
  hp.D = 4;
  hp.H = 32;
  hp.S = 16;
  hp.F = 8;
  hp.M_lte = 16;
  hp.L = 2;

  ScinoNetwork net(hp, 21);
  Rng rng(4);
  const std::vector<double> times{0.05, 0.3, 0.6, 0.8, 0.95, 0.5};
  RealTensor x = RealTensor::matrix(6, 4), target = RealTensor::matrix(6, 4);
  for (double& v : target.data()) v = standard_normal(rng);
  auto loss_of = [&](Tape& tape) {
    Rng drop(77);
    return tape.squared_error(net.forward_tape(tape, x, times, &drop).out, target);
  };
  for (;;) {
    for (double& v : x.data()) v = standard_normal(rng);
    Tape probe;
    loss_of(probe);
    if (probe.min_kink_margin() > 1e-3) break;
  }
  auto& params = net.parameters();
  GradientRecord rec = GradientRecord::zeros_like(net.parameter_ptrs());
  {
    Tape tape;
    tape.backward(loss_of(tape));
    tape.accumulate_into(rec);
  }
  auto loss_value = [&] {
    Tape tape;
    return tape.value(loss_of(tape))[0];
  };
  const double h = 1e-5;
  double grad_worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const std::size_t p = std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, params[p].value.size() - 1)(rng);
    const double saved = params[p].value[k];
    params[p].value[k] = saved + h;
    const double up = loss_value();
    params[p].value[k] = saved - h;
    const double down = loss_value();
    params[p].value[k] = saved;
    grad_worst = std::max(grad_worst, rel_err(rec.grads[p][k], (up - down) / (2 * h)));
  }

  net.set_mode(Mode::eval);
  const double t = 0.3, h1 = 1e-5, h2 = 1e-4;
  double first_worst = 0.0, mixed_worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    std::vector<double> p(4);
    for (;;) {
      for (double& v : p) v = standard_normal(rng);
      KinkMonitor mon;
      net.forward<double>(t, std::span<const double>(p), &mon);
      if (mon.min_margin > 1e-2) break;
    }
    const std::size_t a = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
    const std::size_t b = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
    const std::size_t o = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
    const auto r = net.forward_hyperdual(t, p, a, b);
    auto at = [&](double da, double db) {
      std::vector<double> y = p;
      y[a] += da;
      y[b] += db;
      return net.forward(t, y)[o];
    };
    std::vector<double> up = p, dn = p;
    up[a] += h1;
    dn[a] -= h1;
    first_worst = std::max(first_worst, rel_err(r.d_a[o], (net.forward(t, up)[o] - net.forward(t, dn)[o]) / (2 * h1)));
    const double fd2 = a == b ? (at(2 * h2, 0) - 2 * r.value[o] + at(-2 * h2, 0)) / (4 * h2 * h2)
                              : (at(h2, h2) - at(h2, -h2) - at(-h2, h2) + at(-h2, -h2)) / (4 * h2 * h2);
    mixed_worst = std::max(mixed_worst, rel_err(r.d_ab[o], fd2, 1e-3));
  }
  const bool ok = grad_worst < 1e-5 && first_worst < 1e-4 && mixed_worst < 1e-4;
  return {ok, "grad rel " + fmt(grad_worst) + " (< 1e-5), hyper-dual first " + fmt(first_worst) + ", mixed " + fmt(mixed_worst) +
                  " (< 1e-4)"};
}

Verdict stein_gaussian() {
  int good = 0;
  std::ostringstream means;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    RealTensor x = RealTensor::matrix(1000, 2);
    for (std::size_t i = 0; i < 1000; ++i) {
      x(i, 0) = standard_normal(rng);
      x(i, 1) = x(i, 0) + standard_normal(rng);
    }
    const RealTensor h = stein_hessian_diag(x);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
      m0 += h(i, 0) / 1000.0;
      m1 += h(i, 1) / 1000.0;
    }
    if (std::abs(m0 + 2.0) <= 0.2 * 2.0 && std::abs(m1 + 1.0) <= 0.2 * 1.0) ++good;
    means << " (" << fmt(m0) << "," << fmt(m1) << ")";
  }
  return {good >= 9, std::to_string(good) + "/10 seeds within 20% of (-2,-1); means" + means.str()};
}

using H = HyperDuald;
using Field = std::function<std::vector<H>(std::span<const H>)>;

DerivativeCache analytic_cache(const Field& f, const std::vector<double>& x) {
  return build_derivative_cache([&](std::span<const double> p, std::size_t a, std::size_t b) { return hyperdual_eval(f, p, a, b); },
                                std::span<const double>(x));
}

Verdict deciduous_closed_form() {
  Rng rng(2);
  double worst = 0.0;
  int opposite_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double a = uniform(rng, 0.5, 2.0) * (trial % 2 ? 1.0 : -1.0), b = uniform(rng, -2.0, 2.0);
    std::vector<double> p2(2), p3(3);
    for (double& v : p2) v = standard_normal(rng);
    for (double& v : p3) v = standard_normal(rng);
    // x2 = a x1 + e2 (and x3 = b x2 + e3), unit noise.
    const Field chain2 = [a](std::span<const H> x) {
      const H e2 = x[1] - a * x[0];
      return std::vector<H>{-x[0] + a * e2, -e2};
    };
    const Field chain3 = [a, b](std::span<const H> x) {
      const H e2 = x[1] - a * x[0], e3 = x[2] - b * x[1];
      return std::vector<H>{-x[0] + a * e2, -e2 + b * e3, -e3};
    };
    const auto s2 = deciduous_score(analytic_cache(chain2, p2), {1}, ResidueSign::corrected);
    worst = std::max(worst, std::abs(s2[0] + p2[0]));
    const auto s3 = deciduous_score(analytic_cache(chain3, p3), {2}, ResidueSign::corrected);
    worst = std::max(worst, std::abs(s3[0] - (-p3[0] + a * (p3[1] - a * p3[0]))));
    worst = std::max(worst, std::abs(s3[1] + (p3[1] - a * p3[0])));
    const auto w2 = deciduous_score(analytic_cache(chain2, p2), {1}, ResidueSign::paper);
    const auto w3 = deciduous_score(analytic_cache(chain3, p3), {2}, ResidueSign::paper);
    if (std::abs(w2[0] + p2[0]) > 1e-9 && std::abs(w3[1] + (p3[1] - a * p3[0])) > 1e-9) ++opposite_failures;
  }
  return {worst < 1e-9 && opposite_failures == 100,
          "max error " + fmt(worst) + " (< 1e-9); opposite sign fails " + std::to_string(opposite_failures) + "/100 points"};
}

Verdict leaf_identifiability() {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(400 + seed);
    RealTensor x = RealTensor::matrix(1000, 2);
    for (std::size_t i = 0; i < 1000; ++i) {
      x(i, 0) = standard_normal(rng);
      x(i, 1) = x(i, 0) * x(i, 0) + standard_normal(rng);
    }
    OrderingConfig cfg;
    cfg.hyper = HyperParams::desk(2);
    cfg.hyper->H = 64;
    cfg.hyper->L = 2;
    cfg.train.epochs = 30;
    cfg.train.seed = seed;
    const OrderingResult r = order_all(Dataset({"x1", "x2"}, std::move(x)), cfg);
    if (r.order.removal.front() == 1) ++good;
  }
  return {good >= 9, "node 2 selected first in " + std::to_string(good) + "/10 seeds"};
}

struct ErRun {
  double mean_od = 0.0, mean_baseline = 0.0;
  std::string per_graph;
};

ErRun er_ordering(std::size_t d) {
  ErRun out;
  for (std::uint64_t s = 0; s < 10; ++s) {
    GenConfig gc;
    gc.D = d;
    gc.N = 1000;
    gc.seed = s;
    const Dag g = gen_er_dag(gc);
    const Dataset ds = sample_gp_anm(g, gc);
    OrderingConfig oc;
    oc.seed = s;
    oc.train.seed = s;
    const std::size_t od = order_divergence(order_all(ds, oc).order, g);
    out.mean_od += static_cast<double>(od) / 10.0;
    out.mean_baseline += static_cast<double>(g.edge_count()) / 2.0 / 10.0;
    out.per_graph += " " + std::to_string(od);
  }
  return out;
}

Verdict er_d5() {
  const ErRun r = er_ordering(5);
  return {r.mean_od <= 2.5 && r.mean_od < r.mean_baseline,
          "mean OD " + fmt(r.mean_od) + " (<= 2.5), random baseline " + fmt(r.mean_baseline) + "; per graph" + r.per_graph};
}

Verdict er_d10() {
  const ErRun r = er_ordering(10);
  return {r.mean_od <= 6.0 && 3.0 * r.mean_od <= r.mean_baseline,
          "mean OD " + fmt(r.mean_od) + " (<= 6.0), random baseline " + fmt(r.mean_baseline) + " (>= 3x); per graph" + r.per_graph};
}

Verdict metrics_oracle() {
  using namespace scino::testing;
  std::size_t od_bad = 0, shd_bad = 0, sid_bad = 0, pairs = 0;
  for (std::size_t d = 1; d <= 4; ++d) {
    const auto dags = all_dags(d);
    const auto perms = all_permutations(d);
    for (const Dag& g : dags) {
      for (const auto& p : perms)
        if (order_divergence(p, g) != reference_od(p, g)) ++od_bad;
      const SidOracle oracle(g, 11);
      for (const Dag& h : dags) {
        ++pairs;
        if (shd(g, h) != reference_shd(g, h)) ++shd_bad;
        if (sid(g, h) != oracle.sid(h)) ++sid_bad;
      }
    }
  }
  return {od_bad + shd_bad + sid_bad == 0, std::to_string(pairs) + " graph pairs; mismatches OD " + std::to_string(od_bad) + ", SHD " +
                                               std::to_string(shd_bad) + ", SID " + std::to_string(sid_bad)};
}

EvidenceSource table_evidence(const std::vector<std::vector<double>>& per_step) {
  return [per_step](const std::vector<std::size_t>& rem, const std::vector<std::size_t>& removed) {
    std::vector<double> e;
    for (std::size_t v : rem) e.push_back(per_step.at(removed.size()).at(v));
    return e;
  };
}

Verdict control_properties() {
  std::vector<std::string> failures;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  Rng rng(8);
  for (int fixture = 0; fixture < 50; ++fixture) {
    const std::size_t d = 2 + fixture % 6;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < d; ++i) names.push_back("v" + std::to_string(i));
    std::vector<std::vector<double>> ev(d, std::vector<double>(d));
    for (auto& row : ev)
      for (double& v : row) v = uniform(rng, 0.01, 1.0);
    std::vector<std::size_t> truth(d);
    for (std::size_t i = 0; i < d; ++i) truth[i] = i;
    std::shuffle(truth.begin(), truth.end(), rng);

    // (a) point-mass prior over every node.
    std::vector<std::map<std::string, double>> steps;
    for (std::size_t v : truth) steps.push_back({{names[v], 1.0}});
    TablePrior point(steps);
    ControlConfig soft;
    soft.context = names;
    check(control_order(names, point, table_evidence(ev), soft).order.removal == truth, "point-mass prior");

    // (b) uniform prior: same picks as evidence-only argmax, for any context.
    std::vector<std::size_t> greedy;
    std::vector<bool> alive(d, true);
    for (std::size_t step = 0; step < d; ++step) {
      std::size_t best = d;
      for (std::size_t v = 0; v < d; ++v)
        if (alive[v] && (best == d || ev[step][v] > ev[step][best])) best = v;
      greedy.push_back(best);
      alive[best] = false;
    }
    UniformPrior uni;
    ControlConfig partial;
    partial.context = {names[0]};
    check(control_order(names, uni, table_evidence(ev), soft).order.removal == greedy, "uniform prior (soft)");
    check(control_order(names, uni, table_evidence(ev), partial).order.removal == greedy, "uniform prior (mixed)");
    check(control_order(names, uni, table_evidence(ev), ControlConfig{}).order.removal == greedy, "uniform prior (hard)");

    // (d) every posterior row sums to 1.
    std::vector<std::map<std::string, double>> random_steps(d);
    for (auto& s : random_steps)
      for (const auto& n : names) s[n] = uniform(rng, 0.0, 3.0);
    TablePrior random_prior(random_steps);
    const ControlResult r = control_order(names, random_prior, table_evidence(ev), partial);
    std::map<std::size_t, double> totals;
    for (const auto& row : r.log) totals[row.step] += row.posterior;
    for (const auto& [step, total] : totals) check(std::abs(total - 1.0) <= 1e-12, "posterior normalization");
  }

  // (c) unit examples.
  auto stats_of = [](std::vector<std::vector<double>> rows) {
    RealTensor s = RealTensor::matrix(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[0].size(); ++c) s(r, c) = rows[r][c];
    std::vector<std::size_t> nodes(rows[0].size());
    for (std::size_t c = 0; c < nodes.size(); ++c) nodes[c] = c;
    return EnsembleStats::from_sigmas(nodes, s);
  };
  const auto rank = rank_evidence(stats_of({{0.1, 0.2, 0.3}, {0.2, 0.1, 0.3}}));
  check(std::abs(rank[0] - 0.450) < 5e-4 && std::abs(rank[1] - 0.450) < 5e-4 && std::abs(rank[2] - 0.100) < 5e-4, "rank example");
  const auto ci = ci_evidence(stats_of({{0.1, 0.5, 0.2}, {0.1, 0.5, 0.2}, {0.9, 0.5, 0.05}}), 0.95);
  check(std::abs(ci[1] - 2.0 / 3.0) < 1e-15, "CI example");
  const std::vector<double> one{std::log(0.3)}, two{std::log(0.5), std::log(0.5)};
  check(std::abs(length_normalized_prior(one, 0.4) - 0.3) < 1e-15, "alpha-norm single token");
  check(std::abs(length_normalized_prior(two, 1.0) - 0.5) < 1e-15, "alpha-norm alpha = 1");
  check(std::abs(length_normalized_prior(two, 0.5) - 0.3752) < 5e-5, "alpha-norm alpha = 0.5");
  const auto tau = temperature_soften(std::vector<double>{0.9, 0.1}, 1.0);
  check(std::abs(tau[0] - 0.690) < 5e-4 && std::abs(tau[1] - 0.310) < 5e-4, "tau example");

  std::string detail = failures.empty() ? "50 fixtures: point mass, uniform prior, normalization; unit examples exact" : "failed:";
  for (const auto& f : failures) detail += " " + f + ";";
  return {failures.empty(), detail};
}

Verdict probing_complexity() {
  Rng rng(3);
  RealTensor small = RealTensor::matrix(500, 2);
  for (double& v : small.data()) v = standard_normal(rng);
  TrainConfig tc;
  tc.epochs = 2;
  const TrainedScoreModel base = train(small, HyperParams::desk(2), tc).model;

  ProbeConfig pc;
  pc.batch_size = 256;
  auto timed = [&](std::size_t n, KernelMonitor& mon) {
    RealTensor x = RealTensor::matrix(n, 2);
    Rng r(n);
    for (double& v : x.data()) v = standard_normal(r);
    double best = 1e300;
    for (int rep = 0; rep < 2; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      probe_final_layer(base, {0, 1}, x, pc, &mon);
      best = std::min(best, seconds_since(t0));
    }
    return best;
  };
  KernelMonitor m1, m2;
  const double t1 = timed(100000, m1), t2 = timed(200000, m2);
  const std::size_t peak = std::max(m1.peak_rows, m2.peak_rows);
  const double ratio = t2 / t1;
  return {peak <= pc.batch_size && ratio <= 1.5, "peak kernel rows " + std::to_string(peak) + " (<= 256); time " + fmt(t1) + " s -> " +
                                                     fmt(t2) + " s, ratio " + fmt(ratio) + " (<= 1.5)"};
}

Verdict ensemble_sanity() {
  int hits = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    GenConfig gc;
    gc.D = 5;
    gc.N = 1000;
    gc.seed = s;
    const Dag g = gen_er_dag(gc);
    const Dataset ds = sample_gp_anm(g, gc);
    OrderingConfig oc;
    oc.seed = s;
    oc.train.seed = s;
    const TrainedScoreModel base = train_model(ds.values, oc);
    ProbeConfig pc;
    pc.seed = s;
    const auto heads = probe_ensemble(base, ds.values, 8, pc);
    const EnsembleEvidence ev(heads, ds.values, evaluation_rows(ds.n(), 0, s), ResidueSign::corrected, false);
    const EnsembleStats st = ev.stats({});
    const auto e = rank_evidence(st);
    const std::size_t top = st.nodes[static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin())];
    const auto leaves = g.leaves(std::vector<bool>(5, true));
    if (std::find(leaves.begin(), leaves.end(), top) != leaves.end()) ++hits;
  }
  return {hits >= 7, "true leaf top-1 in " + std::to_string(hits) + "/10 first-step decisions (>= 70%)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> criteria;
  app.add_option("--criterion", criteria, "criterion number (1-10); repeatable, default all")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty())
    for (int c = 1; c <= 10; ++c) criteria.push_back(c);

  const std::map<int, std::pair<const char*, std::function<Verdict()>>> table{
      {1, {"derivative correctness", derivatives}},
      {2, {"Stein Gaussian oracle", stein_gaussian}},
      {3, {"deciduous closed form", deciduous_closed_form}},
      {4, {"leaf identifiability", leaf_identifiability}},
      {5, {"ER(d5) end-to-end", er_d5}},
      {6, {"ER(d10) scaling", er_d10}},
      {7, {"metrics oracle equivalence", metrics_oracle}},
      {8, {"control properties", control_properties}},
      {9, {"probing complexity", probing_complexity}},
      {10, {"ensemble evidence sanity", ensemble_sanity}},
  };
  bool all = true;
  for (int c : criteria) {
    const auto& [name, fn] = table.at(c);
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v{false, ""};
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << c << " " << (v.pass ? "PASS" : "FAIL") << " [" << name << "] " << v.detail << " (" << fmt(seconds_since(t0))
              << " s)" << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}

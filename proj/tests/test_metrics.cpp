#include <doctest.h>

#include <cmath>
#include <random>

#include "simplihumon/metrics.hpp"

using namespace simplihumon;

namespace {

Tensor rnd(Shape s, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(shape_numel(s));
  for (auto& e : v) e = d(rng);
  return Tensor::from_data(std::move(s), std::move(v));
}

// Deliberately naive re-implementations used as cross-checks.
double oracle_ade(const std::vector<double>& g, const std::vector<double>& p, std::size_t F,
                  std::size_t M) {
  double total = 0;
  for (std::size_t t = 0; t < F; ++t)
    for (std::size_t m = 0; m < M; ++m) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        double d = g[(t * M + m) * 3 + c] - p[(t * M + m) * 3 + c];
        s += d * d;
      }
      total += std::sqrt(s);
    }
  return total / double(F * M);
}

double oracle_ape(const std::vector<double>& g, const std::vector<double>& p, std::size_t t,
                  std::size_t M, std::size_t root) {
  double total = 0;
  for (std::size_t m = 0; m < M; ++m) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      double gr = g[(t * M + m) * 3 + c] - g[(t * M + root) * 3 + c];
      double pr = p[(t * M + m) * 3 + c] - p[(t * M + root) * 3 + c];
      s += (gr - pr) * (gr - pr);
    }
    total += std::sqrt(s);
  }
  return total / double(M);
}

NormalizedSample gt_sample(Tensor traj, Tensor pose, std::vector<std::uint8_t> valid = {}) {
  NormalizedSample s;
  s.gt_traj = traj;
  s.gt_pose = pose;
  s.joint_valid = std::move(valid);
  if (traj.defined() && pose.defined()) {
    s.task = TaskMode::joint;
  } else if (traj.defined()) {
    s.task = TaskMode::traj_only;
  } else {
    s.task = TaskMode::pose_only;
  }
  return s;
}

}  // namespace

TEST_CASE("displacement metrics on exact and offset predictions") {
  std::mt19937_64 rng(5);
  Tensor gt = rnd({4, 3, 3}, rng);
  CHECK(ade(gt, gt) == 0.0);
  CHECK(fde(gt, gt, 3) == 0.0);
  CHECK(jpe(gt, gt, 1) == 0.0);
  CHECK(ape(gt, gt, 2, 0) == 0.0);

  // Unit x offset on every joint at every frame.
  std::vector<double> off = gt.data();
  for (std::size_t i = 0; i < off.size(); i += 3) off[i] += 1.0;
  Tensor pred = Tensor::from_data(gt.shape(), off);
  CHECK(ade(gt, pred) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fde(gt, pred, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(jpe(gt, pred, 2) == doctest::Approx(1.0).epsilon(1e-12));
  // A rigid translation is invisible to the root-aligned metric.
  CHECK(ape(gt, pred, 2, 1) == doctest::Approx(0.0));
}

TEST_CASE("fde picks out single frame errors") {
  std::size_t F = 5;
  Tensor gt = Tensor::zeros({F, 1, 3});
  std::vector<double> v(F * 3, 0.0);
  v[(F - 1) * 3 + 1] = 2.0;
  Tensor pred = Tensor::from_data({F, 1, 3}, v);
  CHECK(fde(gt, pred, F - 1) == doctest::Approx(2.0));
  CHECK(fde(gt, pred, 0) == 0.0);
  CHECK(ade(gt, pred) == doctest::Approx(2.0 / double(F)));

  Tensor g1 = Tensor::zeros({1, 2, 3});
  Tensor p1 = Tensor::full({1, 2, 3}, 0.5);
  CHECK(fde(g1, p1, 0) == doctest::Approx(ade(g1, p1)));

  CHECK_THROWS_AS(fde(gt, pred, F), ShapeError);
  CHECK_THROWS_AS(ade(gt, Tensor::zeros({F, 2, 3})), ShapeError);
}

TEST_CASE("metrics match an independent nested loop oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t F = 1 + rng() % 5, M = 1 + rng() % 6;
    Tensor gt = rnd({F, M, 3}, rng);
    Tensor pred = rnd({F, M, 3}, rng);
    CHECK(ade(gt, pred) ==
          doctest::Approx(oracle_ade(gt.data(), pred.data(), F, M)).epsilon(1e-12));
    std::size_t t = rng() % F, root = rng() % M;
    CHECK(ape(gt, pred, t, root) ==
          doctest::Approx(oracle_ape(gt.data(), pred.data(), t, M, root)).epsilon(1e-12));
  }
}

TEST_CASE("translation moves jpe but not ape") {
  std::mt19937_64 rng(21);
  Tensor gt = rnd({3, 4, 3}, rng);
  std::array<double, 3> c = {0.3, -1.2, 0.7};
  std::vector<double> shifted = gt.data();
  for (std::size_t i = 0; i < shifted.size(); i += 3) {
    shifted[i] += c[0];
    shifted[i + 1] += c[1];
    shifted[i + 2] += c[2];
  }
  Tensor pred = Tensor::from_data(gt.shape(), shifted);
  double cn = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(jpe(gt, pred, t) == doctest::Approx(cn).epsilon(1e-12));
    CHECK(ape(gt, pred, t, 2) == doctest::Approx(0.0));
  }
}

TEST_CASE("masked joints leave the metric mean") {
  Tensor gt = Tensor::zeros({2, 3, 3});
  std::vector<double> v(2 * 3 * 3, 0.0);
  // Joint 1 is wildly wrong, joints 0 and 2 are off by 1 in x.
  for (std::size_t t = 0; t < 2; ++t) {
    v[(t * 3 + 0) * 3] = 1.0;
    v[(t * 3 + 1) * 3] = 100.0;
    v[(t * 3 + 2) * 3] = 1.0;
  }
  Tensor pred = Tensor::from_data({2, 3, 3}, v);
  CHECK(ade(gt, pred, {1, 0, 1}) == doctest::Approx(1.0));
  CHECK(jpe(gt, pred, 0, {1, 0, 1}) == doctest::Approx(1.0));
  CHECK(ade(gt, pred) == doctest::Approx(34.0));
  CHECK_THROWS_AS(ade(gt, pred, {1, 0}), ShapeError);
}

TEST_CASE("minimum over branches") {
  std::mt19937_64 rng(31);
  Tensor gt = rnd({2, 2, 3}, rng);
  auto metric = [](const Tensor& g, const Tensor& p) { return ade(g, p); };

  Tensor one = rnd({1, 2, 2, 3}, rng);
  Tensor single = reshape(one, {2, 2, 3});
  CHECK(min_over_k(metric, gt, one) == doctest::Approx(ade(gt, single)));

  // Appending a duplicate never changes the minimum; appending anything never raises it.
  Tensor two = concat({one, one}, 0);
  CHECK(min_over_k(metric, gt, two) == doctest::Approx(min_over_k(metric, gt, one)));
  Tensor extra = rnd({1, 2, 2, 3}, rng);
  Tensor three = concat({two, extra}, 0);
  CHECK(min_over_k(metric, gt, three) <= min_over_k(metric, gt, two) + 1e-15);
}

TEST_CASE("mode utilization histogram") {
  auto u = mode_utilization({0, 1, 0, 1}, 2);
  CHECK(u.histogram == std::vector<std::size_t>{2, 2});
  CHECK(u.max_share == 0.5);

  auto collapsed = mode_utilization({0, 0, 0}, 3);
  CHECK(collapsed.histogram == std::vector<std::size_t>{3, 0, 0});
  CHECK(collapsed.max_share == 1.0);

  CHECK_THROWS_AS(mode_utilization({2}, 2), ShapeError);
  CHECK(mode_utilization({}, 4).histogram == std::vector<std::size_t>{0, 0, 0, 0});
}

TEST_CASE("wta picks the closest branch") {
  Tensor gtt = Tensor::zeros({1, 3});
  auto gt = gt_sample(gtt, Tensor());
  ProposalSet p;
  p.traj = Tensor::from_data({2, 1, 3}, {1, 1, 1, 0, 0, 0});
  auto res = wta_loss(gt, p);
  CHECK(res.winner == 1);
  CHECK(res.loss.item() == 0.0);

  ProposalSet ones;
  ones.traj = Tensor::from_data({1, 1, 3}, {1, 1, 1});
  CHECK(wta_loss(gt, ones).loss.item() == doctest::Approx(std::sqrt(3.0)));

  // Ties resolve to the lowest branch index.
  ProposalSet tie;
  tie.traj = Tensor::from_data({3, 1, 3}, {0, 1, 0, 0, 1, 0, 0, 1, 0});
  CHECK(wta_loss(gt, tie).winner == 0);
}

TEST_CASE("wta is permutation invariant in value") {
  std::mt19937_64 rng(41);
  Tensor gtt = rnd({4, 3}, rng);
  auto gt = gt_sample(gtt, Tensor());
  Tensor b0 = rnd({1, 4, 3}, rng), b1 = rnd({1, 4, 3}, rng), b2 = rnd({1, 4, 3}, rng);
  ProposalSet p;
  p.traj = concat({b0, b1, b2}, 0);
  auto r = wta_loss(gt, p);
  ProposalSet q;
  q.traj = concat({b2, b0, b1}, 0);
  auto r2 = wta_loss(gt, q);
  CHECK(r.loss.item() == doctest::Approx(r2.loss.item()).epsilon(1e-15));
  CHECK(r2.winner == (r.winner + 1) % 3);
}

TEST_CASE("wta scales linearly with the coordinates") {
  std::mt19937_64 rng(43);
  Tensor gtt = rnd({3, 3}, rng);
  Tensor gtp = rnd({3, 2, 3}, rng);
  Tensor pt = rnd({2, 3, 3}, rng), pp = rnd({2, 3, 2, 3}, rng);
  auto scale_all = [](const Tensor& t, double s) {
    std::vector<double> v = t.data();
    for (auto& e : v) e *= s;
    return Tensor::from_data(t.shape(), v);
  };
  ProposalSet p;
  p.traj = pt;
  p.pose = pp;
  auto base = wta_loss(gt_sample(gtt, gtp), p);
  ProposalSet ps;
  ps.traj = scale_all(pt, 2.5);
  ps.pose = scale_all(pp, 2.5);
  auto scaled = wta_loss(gt_sample(scale_all(gtt, 2.5), scale_all(gtp, 2.5)), ps);
  CHECK(scaled.loss.item() == doctest::Approx(2.5 * base.loss.item()).epsilon(1e-12));
  CHECK(scaled.winner == base.winner);

  // The same scaling pushed through the displacement metrics.
  Tensor single = reshape(slice(pt, 0, 0, 1), {3, 3});
  CHECK(ade(scale_all(gtt, 2.5), scale_all(single, 2.5)) ==
        doctest::Approx(2.5 * ade(gtt, single)).epsilon(1e-12));
}

TEST_CASE("wta gradient flows only through the winner") {
  std::mt19937_64 rng(47);
  Tensor gtt = rnd({2, 3}, rng);
  auto gt = gt_sample(gtt, Tensor());
  Tensor win = Tensor::from_data({1, 2, 3}, gtt.data(), true);  // near-exact branch
  {
    auto& v = win.mutable_data();
    for (auto& e : v) e += 0.01;
  }
  Tensor lose = rnd({1, 2, 3}, rng);
  Tensor lose_leaf = Tensor::from_data(lose.shape(), lose.data(), true);
  {
    auto& v = lose_leaf.mutable_data();
    for (auto& e : v) e += 10.0;  // far from gt
  }
  Graph g;
  ProposalSet p;
  p.traj = concat({win, lose_leaf}, 0);
  auto res = wta_loss(gt, p);
  CHECK(res.winner == 0);
  g.backward(res.loss);
  bool winner_has_grad = false;
  for (double d : win.grad()) winner_has_grad = winner_has_grad || d != 0.0;
  CHECK(winner_has_grad);
  for (double d : lose_leaf.grad()) CHECK(d == 0.0);
}

TEST_CASE("wta masks invalid joints and honors stream weights") {
  Tensor gtp = Tensor::zeros({1, 2, 3});
  auto gt = gt_sample(Tensor(), gtp, {1, 0});
  ProposalSet p;
  // Valid joint off by 1 in x; masked joint wildly wrong.
  p.pose = Tensor::from_data({1, 1, 2, 3}, {1, 0, 0, 50, 50, 50});
  auto res = wta_loss(gt, p);
  CHECK(res.loss.item() == doctest::Approx(1.0));

  // Doubling the pose stream weight doubles a pose-only loss.
  auto weighted = wta_loss(gt, p, {1.0, 2.0});
  CHECK(weighted.loss.item() == doctest::Approx(2.0));
}

TEST_CASE("wta rejects stream mismatches") {
  std::mt19937_64 rng(53);
  Tensor gtt = rnd({2, 3}, rng);
  auto gt = gt_sample(gtt, Tensor());
  ProposalSet p;
  p.pose = rnd({1, 2, 2, 3}, rng);
  CHECK_THROWS_AS(wta_loss(gt, p), ShapeError);
  ProposalSet empty;
  CHECK_THROWS_AS(wta_loss(gt, empty), ShapeError);
  ProposalSet bad;
  bad.traj = rnd({1, 3, 3}, rng);  // wrong horizon
  CHECK_THROWS_AS(wta_loss(gt, bad), ShapeError);
}

TEST_CASE("metric report serialization is stable") {
  MetricReport r;
  r.min_ade = 0.25;
  r.min_fde_at[9] = 0.5;
  r.min_ape_at[9] = 0.0123;
  r.min_jpe_at[9] = 0.0456;
  r.winner_histogram = {3, 1};
  r.n_samples = 4;
  r.n_agents = 4;
  std::string a = report_to_json(r), b = report_to_json(r);
  CHECK(a == b);
  CHECK(a.find("\"schema_version\"") != std::string::npos);
  CHECK(a.find("\"min_ade\"") != std::string::npos);
  CHECK(a.find("\"9\"") != std::string::npos);

  std::string line = report_summary_line(r);
  CHECK(line.find("12.3mm") != std::string::npos);   // ape printed in millimeters
  CHECK(line.find("max_share 0.75") != std::string::npos);
}

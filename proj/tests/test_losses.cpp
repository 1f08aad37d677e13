#include <cmath>
#include <vector>

#include "cclab/grad_check.hpp"
#include "cclab/losses.hpp"
#include "cclab/seeds.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cclab;
using namespace cclab::testutil;

TEST_SUITE_BEGIN("losses");

// ---------------------------------------------------------------- distances

TEST_CASE("distance matrix: identical rows, a 3-4-5 pair, and exact symmetry") {
  Tensor<double> same({3, 4});
  same.fill(0.7);
  auto d0 = distance_matrix(same);
  for (double v : d0.data) CHECK(v == 0.0);

  Tensor<double> f({2, 2});
  f.at2(0, 0) = 0.0;
  f.at2(0, 1) = 0.0;
  f.at2(1, 0) = 3.0;
  f.at2(1, 1) = 4.0;
  auto d = distance_matrix(f);
  CHECK(d.at2(0, 1) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(d.at2(0, 0) == 0.0);
  CHECK(d.at2(1, 1) == 0.0);

  auto rng = make_rng(21);
  Tensor<double> r({10, 6});
  fill_uniform(r, rng, -2.0, 2.0);
  auto dr = distance_matrix(r);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      CHECK(dr.at2(i, j) == dr.at2(j, i));  // mirrored entry, bit-identical
      CHECK(dr.at2(i, j) >= 0.0);
    }

  Tensor<double> one_row({1, 3});
  CHECK(contains(thrown_message([&] { distance_matrix(one_row); }), "N >= 2"));
}

TEST_CASE("grad: distance matrix against central differences") {
  auto rng = make_rng(22);
  ParamTensor<double> f("f", {6, 4});
  fill_uniform(f.value, rng, -1.0, 1.0);
  Tensor<double> r({6, 6});
  fill_uniform(r, rng, -1.0, 1.0);

  auto loss = [&] { return dot(distance_matrix(f.value), r); };
  auto dist = distance_matrix(f.value);
  f.grad = distance_matrix_backward(f.value, dist, r);
  GradCheckOpts opts;
  opts.h = 1e-4;  // sqrt curvature blows up as 1/d^3 for nearby pairs
  auto res = grad_check({&f}, loss, opts);
  INFO(res.describe());
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("triplet context: masks partition all off-diagonal pairs") {
  Tensor<double> f({4, 2});
  auto rng = make_rng(23);
  fill_uniform(f, rng, -1.0, 1.0);
  auto ctx = make_triplet_context(f, {0, 0, 1, 1});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * 4 + j;
      const bool diag = i == j;
      CHECK(!(ctx.pos_mask[idx] && ctx.neg_mask[idx]));
      CHECK((ctx.pos_mask[idx] || ctx.neg_mask[idx] || diag));
      if (diag) {
        CHECK(ctx.pos_mask[idx] == 0);
        CHECK(ctx.neg_mask[idx] == 0);
      }
    }
  CHECK(ctx.pos_mask[1] == 1);  // (0,1) same label
  CHECK(ctx.neg_mask[2] == 1);  // (0,2) different label

  CHECK(contains(thrown_message([&] { make_triplet_context(f, {0, 0, 1}); }), "labels"));
  Tensor<double> bad({2, 2, 2});
  CHECK(contains(thrown_message([&] { make_triplet_context(bad, {0, 1}); }), "N x D"));
}

// ----------------------------------------------------- squared-diff fixtures

// Unit-edge tetrahedron, labels {A,A,B,B}: every anchor has its positive at
// distance 1 and both negatives at distance 1, so every weighted sum is 1,
// every delta is 0, and the loss is softplus(0) = ln 2.
static TripletContext<double> tetrahedron_ctx() {
  Tensor<double> f({4, 3});
  const double v[4][3] = {{0, 0, 0},
                          {1, 0, 0},
                          {0.5, std::sqrt(3.0) / 2, 0},
                          {0.5, std::sqrt(3.0) / 6, std::sqrt(6.0) / 3}};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k) f.at2(i, k) = v[i][k];
  return make_triplet_context(f, {0, 0, 1, 1});
}

TEST_CASE("sq loss: balanced unit distances give ln 2") {
  auto ctx = tetrahedron_ctx();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) CHECK(ctx.dist.at2(i, j) == doctest::Approx(1.0).epsilon(1e-12));
  auto out = sq_loss(ctx);
  CHECK(out.loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  for (double d : out.delta) CHECK(d == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sq loss: published form is the negated value") {
  auto ctx = tetrahedron_ctx();
  SqLossOpts<double> printed;
  printed.printed_sign = true;
  CHECK(sq_loss(ctx, printed).loss == doctest::Approx(-std::log(2.0)).epsilon(1e-6));
  CHECK(sq_loss(ctx, printed).loss == -sq_loss(ctx).loss);
}

TEST_CASE("sq loss: softmax weighting of positives at distances 1 and 2") {
  // 1D layout: anchor at 0 with same-label rows at 1 and 2, and two
  // different-label rows at -5 and +5. The negatives are equidistant, so the
  // weighted negative sum is exactly 5 whatever the weights, isolating the
  // positive term: w = (e^1, e^2)/(e^1+e^2), sum = 0.268941*1 + 0.731059*2.
  Tensor<double> f({5, 1});
  f.at2(0, 0) = 0.0;
  f.at2(1, 0) = 1.0;
  f.at2(2, 0) = 2.0;
  f.at2(3, 0) = -5.0;
  f.at2(4, 0) = 5.0;
  auto ctx = make_triplet_context(f, {0, 0, 0, 1, 1});

  const double w1 = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0));
  const double w2 = std::exp(2.0) / (std::exp(1.0) + std::exp(2.0));
  CHECK(w1 == doctest::Approx(0.268941).epsilon(1e-5));
  CHECK(w2 == doctest::Approx(0.731059).epsilon(1e-5));
  const double weighted_pos = 0.268941 * 1.0 + 0.731059 * 2.0;  // 1.731059

  auto out = sq_loss(ctx);
  CHECK(out.delta[0] == doctest::Approx(weighted_pos - 5.0).epsilon(1e-6));

  // equidistant negatives also make the result independent of the
  // negative-weighting sign
  SqLossOpts<double> lineage;
  lineage.neg_sign = -1.0;
  CHECK(sq_loss(ctx, lineage).delta[0] == doctest::Approx(out.delta[0]).epsilon(1e-12));
}

TEST_CASE("sq loss: far-apart tight clusters drive the loss to zero stably") {
  // two coincident same-label pairs, 10 apart: every anchor sees its
  // positive at 0 and both negatives at 10, so delta = -10, phi = -100
  Tensor<double> f({4, 2});
  f.at2(0, 0) = 0.0;
  f.at2(1, 0) = 0.0;
  f.at2(2, 0) = 10.0;
  f.at2(3, 0) = 10.0;
  auto ctx = make_triplet_context(f, {0, 0, 1, 1});
  auto out = sq_loss(ctx);
  for (double d : out.delta) CHECK(d == doctest::Approx(-10.0).epsilon(1e-12));
  CHECK(out.loss > 0.0);      // not flushed to zero
  CHECK(out.loss < 1e-40);    // log(1 + e^-100)
}

TEST_CASE("sq loss: stays finite when delta is large and positive") {
  // near-negative weighting (-1) lets a tiny cross-label gap dominate, so
  // delta ~ 30 - 0.001 and phi ~ 900; a naive log(1+exp(900)) overflows
  Tensor<double> f({4, 2});
  f.at2(0, 0) = 0.0;
  f.at2(0, 1) = 0.0;
  f.at2(1, 0) = 30.0;
  f.at2(1, 1) = 0.0;
  f.at2(2, 0) = 0.0;
  f.at2(2, 1) = 0.001;
  f.at2(3, 0) = 30.0;
  f.at2(3, 1) = 0.001;
  auto ctx = make_triplet_context(f, {0, 0, 1, 1});
  SqLossOpts<double> lineage;
  lineage.neg_sign = -1.0;
  auto out = sq_loss(ctx, lineage);
  CHECK(std::isfinite(out.loss));
  for (double d : out.delta) CHECK(d == doctest::Approx(29.999).epsilon(1e-6));
  CHECK(out.loss == doctest::Approx(29.999 * 29.999).epsilon(1e-9));
}

TEST_CASE("sq loss: gradient emphasizes hard triplets over plain softplus") {
  // |d/d delta softplus(phi(delta))| = sigmoid(phi) * 2|delta|
  CHECK(sq_delta_grad(-0.5) == doctest::Approx(0.4378).epsilon(1e-3));
  CHECK(sigmoid(-0.5) == doctest::Approx(0.3775).epsilon(1e-3));
  CHECK(sq_delta_grad(-0.5) > sigmoid(-0.5));

  CHECK(sq_delta_grad(-3.0) == doctest::Approx(0.00074).epsilon(1e-3));
  CHECK(sigmoid(-3.0) == doctest::Approx(0.04743).epsilon(1e-3));
  CHECK(sq_delta_grad(-3.0) < sigmoid(-3.0));

  // the closed form matches a central difference of the scalar curve; note
  // d phi / d delta = 2|delta| on both branches, so the slope is never negative
  for (double delta : {-3.0, -1.2, -0.5, -0.1, 0.4, 1.7}) {
    const double h = 1e-6;
    auto g = [](double x) { return softplus(x > 0 ? x * x : -x * x); };
    const double numeric = (g(delta + h) - g(delta - h)) / (2 * h);
    CHECK(sq_delta_grad(delta) == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("sq loss: invariant under batch permutation") {
  auto rng = make_rng(24);
  Tensor<double> f({12, 6});
  fill_uniform(f, rng, -1.0, 1.0);
  std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  auto base = sq_loss(make_triplet_context(f, labels));

  std::vector<int> order(12);
  for (int i = 0; i < 12; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Tensor<double> fp({12, 6});
  std::vector<int> lp(12);
  for (int i = 0; i < 12; ++i) {
    lp[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(order[i])];
    for (int k = 0; k < 6; ++k) fp.at2(i, k) = f.at2(order[static_cast<std::size_t>(i)], k);
  }
  auto perm = sq_loss(make_triplet_context(fp, lp));
  CHECK(perm.loss == doctest::Approx(base.loss).epsilon(1e-7));
  for (int i = 0; i < 12; ++i)
    CHECK(perm.delta[static_cast<std::size_t>(i)] ==
          doctest::Approx(base.delta[static_cast<std::size_t>(order[i])]).epsilon(1e-7));
}

TEST_CASE("sq loss: contracting positives lowers every delta and the loss") {
  auto rng = make_rng(25);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> f({12, 8});
    fill_uniform(f, rng, -1.0, 1.0);
    std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
    auto ctx = make_triplet_context(f, labels);
    auto base = sq_loss(ctx);

    auto shrunk = ctx;
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        if (ctx.pos_mask[static_cast<std::size_t>(i) * 12 + j]) shrunk.dist.at2(i, j) *= 0.9;
    auto tighter = sq_loss(shrunk);
    CHECK(tighter.loss < base.loss);
    for (int i = 0; i < 12; ++i)
      CHECK(tighter.delta[static_cast<std::size_t>(i)] <
            base.delta[static_cast<std::size_t>(i)] + 1e-12);
  }
}

TEST_CASE("sq loss: rejects anchors without a positive or a negative") {
  auto rng = make_rng(26);
  Tensor<double> f({4, 3});
  fill_uniform(f, rng, -1.0, 1.0);
  // all labels distinct: no anchor has a positive
  auto no_pos = make_triplet_context(f, {0, 1, 2, 3});
  CHECK(contains(thrown_message([&] { sq_loss(no_pos); }), "lacks a positive or a negative"));
  CHECK(contains(thrown_message([&] { sq_loss_backward(no_pos); }), "lacks"));
  // all labels equal: no anchor has a negative
  auto no_neg = make_triplet_context(f, {7, 7, 7, 7});
  CHECK(contains(thrown_message([&] { sq_loss(no_neg); }), "lacks"));
}

// -------------------------------------------------------- id loss and total

TEST_CASE("id loss: uniform logits cost ln K and confident logits almost nothing") {
  Tensor<double> uniform({3, 4});
  uniform.fill(1.25);
  CHECK(id_loss(uniform, {0, 3, 1}).loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  Tensor<double> confident({2, 4});
  confident.fill(0.0);
  confident.at2(0, 2) = 10.0;
  confident.at2(1, 0) = 10.0;
  CHECK(id_loss(confident, {2, 0}).loss < 0.01);

  CHECK(contains(thrown_message([&] { id_loss(uniform, {0, 4, 1}); }), "label"));
}

TEST_CASE("id loss: concatenated batches average by size") {
  auto rng = make_rng(27);
  Tensor<double> a({3, 5}), b({5, 5});
  fill_uniform(a, rng, -2.0, 2.0);
  fill_uniform(b, rng, -2.0, 2.0);
  std::vector<int> la = {0, 4, 2}, lb = {1, 1, 3, 0, 2};

  Tensor<double> both = concat_rows(a, b);
  std::vector<int> lboth = la;
  lboth.insert(lboth.end(), lb.begin(), lb.end());

  const double expect =
      (3 * id_loss(a, la).loss + 5 * id_loss(b, lb).loss) / 8.0;
  CHECK(id_loss(both, lboth).loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("total loss: plain sum, rejecting non-finite parts") {
  CHECK(total_loss(0.0, 0.0) == 0.0);
  CHECK(total_loss(1.0, 0.5) == 1.5);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(contains(thrown_message([&] { total_loss(inf, 0.5); }), "non-finite"));
  CHECK(contains(thrown_message([&] { total_loss(0.5, std::nan("")); }), "non-finite"));
}

TEST_CASE("loss report: total equals the sum of the parts") {
  LossReport<double> rep;
  rep.l_id = 1.25;
  rep.l_sq = 0.5;
  rep.l_total = total_loss(rep.l_id, rep.l_sq);
  rep.per_anchor_delta = {-1.0, 0.5, -0.4, 0.1};
  CHECK(std::abs(rep.l_total - (rep.l_id + rep.l_sq)) <= 1e-7);
  CHECK(rep.mean_delta() == doctest::Approx(-0.2).epsilon(1e-12));
}

// -------------------------------------------------------------- grad checks

TEST_CASE("grad: sq loss through the distance matrix, both weighting signs") {
  for (double neg_sign : {1.0, -1.0}) {
    CAPTURE(neg_sign);
    auto rng = make_rng(28);
    ParamTensor<double> f("features", {8, 4});
    fill_uniform(f.value, rng, -1.0, 1.0);
    std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3};
    SqLossOpts<double> opts;
    opts.neg_sign = neg_sign;

    auto loss = [&] { return sq_loss(make_triplet_context(f.value, labels), opts).loss; };
    auto ctx = make_triplet_context(f.value, labels);
    auto ddist = sq_loss_backward(ctx, opts);
    f.grad = distance_matrix_backward(f.value, ctx.dist, ddist);

    auto res = grad_check({&f}, loss);
    INFO(res.describe());
    CHECK(res.max_rel_err <= 1e-4);
  }
}

TEST_CASE("grad: published-sign gradient is the exact negation") {
  auto rng = make_rng(29);
  Tensor<double> f({8, 4});
  fill_uniform(f, rng, -1.0, 1.0);
  auto ctx = make_triplet_context(f, std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3});
  SqLossOpts<double> printed;
  printed.printed_sign = true;
  auto d_pos = sq_loss_backward(ctx);
  auto d_neg = sq_loss_backward(ctx, printed);
  for (std::size_t i = 0; i < d_pos.numel(); ++i) CHECK(d_neg[i] == -d_pos[i]);
}

TEST_CASE("grad: total objective adds the two losses' gradients") {
  auto rng = make_rng(30);
  ParamTensor<double> f("features", {8, 4});
  ParamTensor<double> logits("logits", {8, 5});
  fill_uniform(f.value, rng, -1.0, 1.0);
  fill_uniform(logits.value, rng, -1.0, 1.0);
  std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3};

  auto loss = [&] {
    const double l_id = id_loss(logits.value, labels).loss;
    const double l_sq = sq_loss(make_triplet_context(f.value, labels)).loss;
    return total_loss(l_id, l_sq);
  };

  auto xent = softmax_cross_entropy(logits.value, labels);
  logits.grad = softmax_cross_entropy_backward(xent, labels);
  auto ctx = make_triplet_context(f.value, labels);
  f.grad = distance_matrix_backward(f.value, ctx.dist, sq_loss_backward(ctx));

  auto res = grad_check({&f, &logits}, loss);
  INFO(res.describe());
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_SUITE_END();

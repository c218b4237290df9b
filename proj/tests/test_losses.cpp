#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "egokd/errors.hpp"
#include "egokd/losses.hpp"
#include "egokd/rng.hpp"

using namespace egokd;

namespace {

// Central differences of a scalar function of a vector, evaluated in long
// double so cancellation noise stays far below the tolerance.
double fd_vec_max_rel(const std::function<long double(const std::vector<long double>&)>& f,
                      const std::vector<double>& point, const std::vector<double>& analytic) {
  std::vector<long double> x(point.begin(), point.end());
  double max_rel = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const long double saved = x[i];
    const long double h = 1e-6L * std::max<long double>(1.0L, std::abs(saved));
    x[i] = saved + h;
    const long double fp = f(x);
    x[i] = saved - h;
    const long double fm = f(x);
    x[i] = saved;
    const double fd = static_cast<double>((fp - fm) / (2 * h));
    const double err = std::abs(fd - analytic[i]);
    const double mag = std::max(std::abs(fd), std::abs(analytic[i]));
    if (mag > 1e-9) max_rel = std::max(max_rel, err / mag);
  }
  return max_rel;
}

double entropy(const std::vector<double>& p) {
  double h = 0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

double binary_entropy(double y) {
  double h = 0;
  if (y > 0) h -= y * std::log(y);
  if (y < 1) h -= (1 - y) * std::log(1 - y);
  return h;
}

}  // namespace

TEST_CASE("loss_act: worked examples") {
  CHECK(loss_act<double>({0.3, 0.3, 0.3, 0.3}, 2) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // log(1 + exp(-20))
  CHECK(loss_act<double>({10.0, -10.0}, 0) ==
        doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(loss_act<double>({10.0, -10.0}, 0) == doctest::Approx(2.061e-9).epsilon(1e-3));
  // shift invariance
  const double base = loss_act<double>({1.0, -0.5, 2.0}, 1);
  const double shifted = loss_act<double>({1.0 + 7.5, -0.5 + 7.5, 2.0 + 7.5}, 1);
  CHECK(base == doctest::Approx(shifted).epsilon(1e-12));
  CHECK_THROWS_AS(loss_act<double>({0.0, 1.0}, 2), DataError);
  CHECK_THROWS_AS(loss_act<double>({0.0, 1.0}, -1), DataError);
}

TEST_CASE("loss_ego / loss_obj: worked examples") {
  // matched uniform pair: entropy log 2
  const std::vector<double> unif_lp{std::log(0.5), std::log(0.5)};
  const std::vector<double> unif_t{0.5, 0.5};
  CHECK(soft_target_loss<double>(unif_lp, unif_t) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // matched one-hot: zero loss (guarded -inf side multiplied by zero target)
  const std::vector<double> onehot_lp{0.0, -745.0};
  const std::vector<double> onehot_t{1.0, 0.0};
  CHECK(soft_target_loss<double>(onehot_lp, onehot_t) == doctest::Approx(0.0).epsilon(1e-12));

  // hand-evaluated soft pair
  const double t0 = 0.7311, t1 = 0.2689;
  const std::vector<double> lp{std::log(0.6), std::log(0.4)};
  const std::vector<double> soft_t{t0, t1};
  const double expected = -(t0 * std::log(0.6) + t1 * std::log(0.4));
  CHECK(soft_target_loss<double>(lp, soft_t) == doctest::Approx(expected).epsilon(1e-12));

  // object flavor: matched uniform over C classes
  const int C = 5;
  std::vector<double> lpC(C, std::log(1.0 / C)), tC(C, 1.0 / C);
  CHECK(soft_target_loss<double>(lpC, tC) == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  // random pair against a direct sum
  Rng rng(8);
  std::vector<double> logits(C), target(C);
  double tsum = 0;
  for (int i = 0; i < C; ++i) {
    logits[i] = rng.uniform(-3, 3);
    target[i] = rng.uniform(0.01, 1.0);
    tsum += target[i];
  }
  for (double& v : target) v /= tsum;
  std::vector<double> lps;
  log_softmax_vec(logits, lps);
  double direct = 0;
  for (int i = 0; i < C; ++i) direct -= target[i] * lps[i];
  CHECK(soft_target_loss<double>(lps, target) == doctest::Approx(direct).epsilon(1e-12));
}

namespace {

Tensor<double> map1(std::vector<double> values, int t = 1, int h = 1, int w = 1) {
  Tensor<double> m({1, t, h, w});
  m.data = std::move(values);
  return m;
}

}  // namespace

TEST_CASE("loss_int: worked examples") {
  {
    // confident-correct limit
    const auto logits = map1({-20.0});
    const std::vector<double> target{0.0};
    const double v = loss_int<double>(logits, logits, target, target);
    CHECK(v == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(v >= 0.0);
  }
  {
    // single cell, y = 0.9, logit 0 in both maps: ln 2 per cell
    const auto logits = map1({0.0});
    const std::vector<double> target{0.9};
    CHECK(loss_int<double>(logits, logits, target, target) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  {
    // target exactly sigmoid(logits): loss equals the mean binary entropy
    const auto hand = map1({0.3, -1.2, 2.0, 0.0}, 1, 2, 2);
    const auto object = map1({-0.4, 0.9, 1.5, -2.2}, 1, 2, 2);
    std::vector<double> ty, to;
    for (double l : hand.data) ty.push_back(1.0 / (1.0 + std::exp(-l)));
    for (double l : object.data) to.push_back(1.0 / (1.0 + std::exp(-l)));
    double expected = 0;
    for (double y : ty) expected += binary_entropy(y);
    for (double y : to) expected += binary_entropy(y);
    expected /= 8.0;
    CHECK(loss_int<double>(hand, object, ty, to) == doctest::Approx(expected).epsilon(1e-10));
  }
  {
    const auto logits = map1({0.0});
    const std::vector<double> bad{1.5};
    const std::vector<double> ok{0.5};
    CHECK_THROWS_AS(loss_int<double>(logits, logits, bad, ok), DataError);
  }
}

TEST_CASE("loss_int: literal form matches -y*log(sigmoid) and is degenerate at +inf logits") {
  const auto logits = map1({1.3, -0.7}, 1, 1, 2);
  const std::vector<double> target{0.8, 0.4};
  double expected = 0;
  for (size_t i = 0; i < target.size(); ++i) {
    expected += -target[i] * std::log(1.0 / (1.0 + std::exp(-logits.data[i])));
  }
  expected /= 2.0;
  CHECK(loss_int<double>(logits, logits, target, target, IntLossForm::literal,
                         IntMapMode::hand_only) == doctest::Approx(expected).epsilon(1e-12));

  // the literal form keeps shrinking as logits grow: minimized by predicting 1
  const auto big = map1({50.0, 50.0}, 1, 1, 2);
  CHECK(loss_int<double>(big, big, target, target, IntLossForm::literal,
                         IntMapMode::hand_only) < 1e-20);
}

TEST_CASE("loss_int: map masking modes") {
  const auto hand = map1({2.0});
  const auto object = map1({-2.0});
  const std::vector<double> ty{1.0}, to{0.0};
  const double lh = loss_int<double>(hand, object, ty, to, IntLossForm::bce,
                                     IntMapMode::hand_only);
  const double lo = loss_int<double>(hand, object, ty, to, IntLossForm::bce,
                                     IntMapMode::object_only);
  const double both = loss_int<double>(hand, object, ty, to, IntLossForm::bce, IntMapMode::both);
  CHECK(both == doctest::Approx(0.5 * (lh + lo)).epsilon(1e-12));
  CHECK(lh == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("loss_total: flags, weights, linearity") {
  const LossWeights w{0.1, 0.5, 1.0};
  {
    const LossReport r = loss_total(1.25, 0.7, 0.4, 0.9, w, TaskFlags{false, false, false});
    CHECK(r.l_total == 1.25);
    CHECK(r.l_ego == 0.0);
    CHECK(r.l_obj == 0.0);
    CHECK(r.l_int == 0.0);
  }
  {
    const LossReport r = loss_total(1.25, 0.7, 0.4, 0.9, w, TaskFlags{true, true, true});
    CHECK(r.l_total == doctest::Approx(1.25 + 0.1 * 0.7 + 0.5 * 0.4 + 1.0 * 0.9).epsilon(1e-12));
    CHECK(std::abs(r.l_total - (r.l_act + w.w_ego * r.l_ego + w.w_obj * r.l_obj +
                                w.w_int * r.l_int)) < 1e-6);
  }
  {
    // doubling w_int adds exactly l_int
    LossWeights w2 = w;
    w2.w_int = 2.0;
    const LossReport a = loss_total(1.25, 0.7, 0.4, 0.9, w, TaskFlags{true, true, true});
    const LossReport b = loss_total(1.25, 0.7, 0.4, 0.9, w2, TaskFlags{true, true, true});
    CHECK(b.l_total - a.l_total == doctest::Approx(0.9).epsilon(1e-12));
  }
  {
    // zero weight behaves exactly like a disabled task
    LossWeights wz = w;
    wz.w_ego = 0.0;
    const LossReport r = loss_total(1.25, 0.7, 0.4, 0.9, wz, TaskFlags{true, true, true});
    CHECK(r.l_ego == 0.0);
    const TaskFlags eff = effective_tasks(TaskFlags{true, true, true}, wz);
    CHECK_FALSE(eff.ego);
    CHECK(eff.obj);
  }
}

TEST_CASE("Gibbs bounds: soft-target losses dominate the target entropy") {
  Rng rng(515);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = rng.uniform_int(2, 8);
    std::vector<double> target(C);
    double sum = 0;
    for (double& v : target) {
      v = rng.uniform(1e-3, 1.0);
      sum += v;
    }
    for (double& v : target) v /= sum;

    std::vector<double> student_logits(C);
    for (double& v : student_logits) v = rng.uniform(-4, 4);
    std::vector<double> lp;
    log_softmax_vec(student_logits, lp);
    CHECK(soft_target_loss<double>(lp, target) >= entropy(target) - 1e-12);

    // equality iff the student matches the target
    std::vector<double> matched(C);
    for (int i = 0; i < C; ++i) matched[i] = std::log(target[i]);
    CHECK(std::abs(soft_target_loss<double>(matched, target) - entropy(target)) < 1e-8);
  }
}

TEST_CASE("Gibbs bounds: interaction loss dominates the summed binary entropy") {
  Rng rng(616);
  for (int trial = 0; trial < 100; ++trial) {
    const int cells = rng.uniform_int(1, 16);
    Tensor<double> hand({1, 1, 1, cells}), object({1, 1, 1, cells});
    std::vector<double> ty(cells), to(cells);
    for (int i = 0; i < cells; ++i) {
      hand.data[i] = rng.uniform(-4, 4);
      object.data[i] = rng.uniform(-4, 4);
      ty[i] = rng.uniform(0.0, 1.0);
      to[i] = rng.uniform(0.0, 1.0);
    }
    double bound = 0;
    for (int i = 0; i < cells; ++i) bound += binary_entropy(ty[i]) + binary_entropy(to[i]);
    bound /= 2.0 * cells;
    CHECK(loss_int<double>(hand, object, ty, to) >= bound - 1e-12);

    // equality at sigmoid(l) = y, with clamped logits for extreme targets
    Tensor<double> mh = hand, mo = object;
    for (int i = 0; i < cells; ++i) {
      mh.data[i] = std::log(std::max(ty[i], 1e-17) / std::max(1.0 - ty[i], 1e-17));
      mo.data[i] = std::log(std::max(to[i], 1e-17) / std::max(1.0 - to[i], 1e-17));
    }
    CHECK(std::abs(loss_int<double>(mh, mo, ty, to) - bound) < 1e-8);
  }
}

TEST_CASE("gradients: every loss matches central finite differences") {
  Rng rng(717);
  for (int trial = 0; trial < 8; ++trial) {
    const int K = rng.uniform_int(2, 6);
    std::vector<double> logits(K);
    for (double& v : logits) v = rng.uniform(-3, 3);
    const int label = rng.uniform_int(0, K - 1);

    std::vector<double> d_act;
    loss_act_backward<double>(logits, label, 1.0, d_act);
    CHECK(fd_vec_max_rel(
              [&](const std::vector<long double>& x) {
                std::vector<long double> v(x.begin(), x.end());
                return loss_act<long double>(v, label);
              },
              logits, d_act) < 1e-5);

    // soft-target loss through the log-softmax, against pre-softmax logits
    std::vector<double> target(K);
    double tsum = 0;
    for (double& v : target) {
      v = rng.uniform(0.05, 1.0);
      tsum += v;
    }
    for (double& v : target) v /= tsum;
    std::vector<double> lp;
    log_softmax_vec(logits, lp);
    std::vector<double> d_lp;
    soft_target_loss_backward<double>(target, 1.0, d_lp);
    std::vector<double> d_logits;
    log_softmax_backward(lp, d_lp, d_logits);
    CHECK(fd_vec_max_rel(
              [&](const std::vector<long double>& x) {
                std::vector<long double> lp_ld;
                log_softmax_vec(x, lp_ld);
                std::vector<long double> t(target.begin(), target.end());
                return soft_target_loss<long double>(lp_ld, t);
              },
              logits, d_logits) < 1e-5);

    // interaction loss w.r.t. its map logits, both forms
    for (const IntLossForm form : {IntLossForm::bce, IntLossForm::literal}) {
      const int cells = rng.uniform_int(1, 6);
      std::vector<double> hl(cells), ol(cells), ty(cells), to(cells);
      for (int i = 0; i < cells; ++i) {
        hl[i] = rng.uniform(-3, 3);
        ol[i] = rng.uniform(-3, 3);
        ty[i] = rng.uniform(0, 1);
        to[i] = rng.uniform(0, 1);
      }
      Tensor<double> hand({1, 1, 1, cells}), object({1, 1, 1, cells});
      hand.data = hl;
      object.data = ol;
      Tensor<double> dh({1, 1, 1, cells}), dobj({1, 1, 1, cells});
      loss_int_backward<double>(hand, object, ty, to, 1.0, &dh, &dobj, form);
      // treat (hand, object) as one concatenated input vector
      std::vector<double> point = hl;
      point.insert(point.end(), ol.begin(), ol.end());
      std::vector<double> analytic = dh.data;
      analytic.insert(analytic.end(), dobj.data.begin(), dobj.data.end());
      CHECK(fd_vec_max_rel(
                [&](const std::vector<long double>& x) {
                  Tensor<long double> h({1, 1, 1, cells}), o({1, 1, 1, cells});
                  for (int i = 0; i < cells; ++i) {
                    h.data[i] = x[i];
                    o.data[i] = x[cells + i];
                  }
                  std::vector<long double> tyl(ty.begin(), ty.end()), tol(to.begin(), to.end());
                  return loss_int<long double>(h, o, tyl, tol, form);
                },
                point, analytic) < 1e-5);
    }
  }
}

TEST_CASE("gradient of the ego loss w.r.t. pre-softmax logits is softmax minus target") {
  Rng rng(818);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits{rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const double t0 = rng.uniform(0.01, 0.99);
    const std::vector<double> target{t0, 1 - t0};
    std::vector<double> lp;
    log_softmax_vec(logits, lp);
    std::vector<double> d_lp;
    soft_target_loss_backward<double>(target, 1.0, d_lp);
    std::vector<double> d_logits;
    log_softmax_backward(lp, d_lp, d_logits);
    const auto p = softmax_vec(logits);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(d_logits[i] - (p[i] - target[i])) < 1e-12);
    }
  }
}

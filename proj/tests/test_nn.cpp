#include <catch2/catch_amalgamated.hpp>

#include <coguide/nn.hpp>

#include <cmath>
#include <random>

using namespace coguide;

namespace {

std::mt19937_64 rng(777);
double uniform(double lo, double hi) {
  double u = (rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + u * (hi - lo);
}
Tensor rand_t(std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(-0.8, 0.8);
  return t;
}

struct LstmWeights {
  Tensor w_ih, w_hh, b;
  LstmWeights(int d_in, int h) : w_ih(rand_t({4 * h, d_in})), w_hh(rand_t({4 * h, h})), b(rand_t({4 * h})) {}
};

LstmDirParams bind(Tape& t, const LstmWeights& w) {
  return LstmDirParams{t.leaf(w.w_ih), t.leaf(w.w_hh), t.leaf(w.b)};
}

}  // namespace

TEST_CASE("zero-weight BiLSTM outputs zeros", "[nn]") {
  Tape t;
  int h = 3;
  LstmDirParams zero{t.leaf(Tensor({4 * h, 2})), t.leaf(Tensor({4 * h, h})),
                     t.leaf(Tensor({4 * h}))};
  std::vector<Var> inputs = {t.leaf(rand_t({2})), t.leaf(rand_t({2}))};
  auto out = birnn_forward(t, inputs, zero, zero);
  for (const auto& o : out)
    for (int i = 0; i < 2 * h; ++i) REQUIRE(t.value(o)[i] == 0.0);
}

TEST_CASE("length-1 sequence feeds both directions from the same input", "[nn]") {
  Tape t;
  LstmWeights fw(3, 2), bw(3, 2);
  Tensor x = rand_t({3});
  auto out = birnn_forward(t, {t.leaf(x)}, bind(t, fw), bind(t, bw));
  REQUIRE(out.size() == 1);
  // forward half equals a single-direction scan over [x] with fw weights
  Tape t2;
  auto fwd_only = lstm_scan(t2, {t2.leaf(x)}, bind(t2, fw), false);
  for (int i = 0; i < 2; ++i) REQUIRE(t.value(out[0])[i] == t2.value(fwd_only[0])[i]);
}

TEST_CASE("reversing the input swaps the direction halves", "[nn]") {
  const int d_in = 3, h = 2, n = 3;
  LstmWeights fw(d_in, h), bw(d_in, h);
  std::vector<Tensor> xs;
  for (int i = 0; i < n; ++i) xs.push_back(rand_t({d_in}));

  Tape t1;
  std::vector<Var> in1;
  for (const auto& x : xs) in1.push_back(t1.leaf(x));
  auto out = birnn_forward(t1, in1, bind(t1, fw), bind(t1, bw));

  Tape t2;
  std::vector<Var> in2;
  for (int i = n - 1; i >= 0; --i) in2.push_back(t2.leaf(xs[static_cast<std::size_t>(i)]));
  // swapped direction weights on the reversed sequence
  auto out_rev = birnn_forward(t2, in2, bind(t2, bw), bind(t2, fw));

  for (int i = 0; i < n; ++i) {
    const Tensor& a = t1.value(out[static_cast<std::size_t>(i)]);
    const Tensor& b = t2.value(out_rev[static_cast<std::size_t>(n - 1 - i)]);
    for (int j = 0; j < h; ++j) {
      REQUIRE_THAT(a[j], Catch::Matchers::WithinAbs(b[h + j], 1e-12));   // fwd half <-> bwd half
      REQUIRE_THAT(a[h + j], Catch::Matchers::WithinAbs(b[j], 1e-12));
    }
  }
}

TEST_CASE("self-attention with a single key copies the value row", "[nn]") {
  Tape t;
  Tensor wq = rand_t({3, 4}), wk = rand_t({3, 4}), wv = rand_t({3, 4});
  Tensor x = rand_t({4});
  auto out = self_attention(t, {t.leaf(x)}, t.leaf(wq), t.leaf(wk), t.leaf(wv));
  Tape t2;
  Var v = t2.matvec(t2.leaf(wv), t2.leaf(x));
  for (int i = 0; i < 3; ++i)
    REQUIRE_THAT(t.value(out[0])[i], Catch::Matchers::WithinAbs(t2.value(v)[i], 1e-12));
}

TEST_CASE("identical rows attend identically", "[nn]") {
  Tape t;
  Tensor wq = rand_t({3, 4}), wk = rand_t({3, 4}), wv = rand_t({3, 4});
  Tensor x = rand_t({4});
  std::vector<Var> xs = {t.leaf(x), t.leaf(x), t.leaf(x)};
  auto out = self_attention(t, xs, t.leaf(wq), t.leaf(wk), t.leaf(wv));
  for (std::size_t i = 1; i < out.size(); ++i)
    for (int j = 0; j < 3; ++j)
      REQUIRE_THAT(t.value(out[i])[j], Catch::Matchers::WithinAbs(t.value(out[0])[j], 1e-12));
}

TEST_CASE("attention rows are distributions", "[nn]") {
  // identity value projection over basis-vector inputs surfaces the raw
  // attention weights in the output, so each output must sum to 1
  Tape t;
  const int n = 3;
  Tensor eye({n, n});
  for (int i = 0; i < n; ++i) eye.at(i, i) = 1.0;
  std::vector<Var> xs;
  for (int i = 0; i < n; ++i) {
    Tensor e({n});
    e[i] = 1.0;
    xs.push_back(t.leaf(e));
  }
  auto out = self_attention(t, xs, t.leaf(rand_t({n, n})), t.leaf(rand_t({n, n})), t.leaf(eye));
  for (const auto& o : out) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      REQUIRE(t.value(o)[j] >= 0.0);
      sum += t.value(o)[j];
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("zero-weight decoders emit 0.5 and uniform", "[nn]") {
  Tape t;
  const int d = 4, mid = 3, n_i = 5, n_s = 6;
  DecoderParams zi{t.leaf(Tensor({n_i, mid})), t.leaf(Tensor({n_i})),
                   t.leaf(Tensor({mid, d})), t.leaf(Tensor({mid}))};
  DecoderParams zs{t.leaf(Tensor({n_s, mid})), t.leaf(Tensor({n_s})),
                   t.leaf(Tensor({mid, d})), t.leaf(Tensor({mid}))};
  Var h = t.leaf(rand_t({d}));
  Var yi = intent_token_decoder(t, h, zi, 0.01);
  Var ys = slot_token_decoder(t, h, zs, 0.01);
  for (int j = 0; j < n_i; ++j) REQUIRE(t.value(yi)[j] == 0.5);
  for (int j = 0; j < n_s; ++j)
    REQUIRE_THAT(t.value(ys)[j], Catch::Matchers::WithinAbs(1.0 / n_s, 1e-12));
}

TEST_CASE("decoder probabilities stay strictly inside (0,1) and sum to 1", "[nn]") {
  Tape t;
  const int d = 5, mid = 4, n_i = 3, n_s = 4;
  DecoderParams pi{t.leaf(rand_t({n_i, mid})), t.leaf(rand_t({n_i})),
                   t.leaf(rand_t({mid, d})), t.leaf(rand_t({mid}))};
  DecoderParams ps{t.leaf(rand_t({n_s, mid})), t.leaf(rand_t({n_s})),
                   t.leaf(rand_t({mid, d})), t.leaf(rand_t({mid}))};
  for (int trial = 0; trial < 10; ++trial) {
    Var h = t.leaf(rand_t({d}));
    Var yi = intent_token_decoder(t, h, pi, 0.01);
    for (int j = 0; j < n_i; ++j) {
      REQUIRE(t.value(yi)[j] > 0.0);
      REQUIRE(t.value(yi)[j] < 1.0);
    }
    Var ys = slot_token_decoder(t, h, ps, 0.01);
    double sum = 0.0;
    for (int j = 0; j < n_s; ++j) sum += t.value(ys)[j];
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("softmax decoder is shift invariant in the logit bias", "[nn]") {
  Tape t;
  const int d = 3, mid = 3, n_s = 4;
  Tensor w1 = rand_t({n_s, mid}), b1 = rand_t({n_s}), w2 = rand_t({mid, d}), b2 = rand_t({mid});
  Tensor h = rand_t({d});
  auto run = [&](double shift) {
    Tensor b1s = b1;
    for (std::int64_t i = 0; i < b1s.numel(); ++i) b1s[i] += shift;
    Tape tp;
    DecoderParams p{tp.leaf(w1), tp.leaf(b1s), tp.leaf(w2), tp.leaf(b2)};
    return tp.value(slot_token_decoder(tp, tp.leaf(h), p, 0.01));
  };
  Tensor base = run(0.0), shifted = run(3.7);
  for (int j = 0; j < n_s; ++j)
    REQUIRE_THAT(base[j], Catch::Matchers::WithinAbs(shifted[j], 1e-12));
}

TEST_CASE("decoder matches a direct formula evaluation", "[nn]") {
  // 2x2 instance evaluated with plain arithmetic
  const double slope = 0.01;
  Tensor w2({2, 2}, {0.5, -0.3, 0.2, 0.7});
  Tensor b2({2}, {0.1, -0.2});
  Tensor w1({2, 2}, {1.0, -1.0, 0.4, 0.6});
  Tensor b1({2}, {-0.05, 0.15});
  Tensor h({2}, {0.3, -0.8});

  auto leaky = [&](double x) { return x > 0.0 ? x : slope * x; };
  double m0 = leaky(0.5 * 0.3 + (-0.3) * (-0.8) + 0.1);
  double m1 = leaky(0.2 * 0.3 + 0.7 * (-0.8) + (-0.2));
  double z0 = 1.0 * m0 + (-1.0) * m1 + (-0.05);
  double z1 = 0.4 * m0 + 0.6 * m1 + 0.15;
  double e0 = 1.0 / (1.0 + std::exp(-z0));
  double e1 = 1.0 / (1.0 + std::exp(-z1));

  Tape t;
  DecoderParams p{t.leaf(w1), t.leaf(b1), t.leaf(w2), t.leaf(b2)};
  Var y = intent_token_decoder(t, t.leaf(h), p, slope);
  REQUIRE_THAT(t.value(y)[0], Catch::Matchers::WithinAbs(e0, 1e-14));
  REQUIRE_THAT(t.value(y)[1], Catch::Matchers::WithinAbs(e1, 1e-14));
}

TEST_CASE("grad_of fills zeros for untouched parameters", "[nn]") {
  ModelParams params;
  params.tensors.emplace("a", rand_t({3}));
  params.tensors.emplace("b", rand_t({2}));
  Tape t;
  ParamBinding pb(t, params);
  Var loss = t.sum(pb["a"]);
  GradMap g = grad_of(t, loss, pb, params);
  for (int i = 0; i < 3; ++i) REQUIRE(g.at("a")[i] == 1.0);
  for (int i = 0; i < 2; ++i) REQUIRE(g.at("b")[i] == 0.0);
}

TEST_CASE("constant loss yields all-zero gradients", "[nn]") {
  ModelParams params;
  params.tensors.emplace("a", rand_t({3}));
  Tape t;
  ParamBinding pb(t, params);
  pb["a"];  // bound but unused by the loss
  Var loss = t.constant_scalar(0.0);
  GradMap g = grad_of(t, loss, pb, params);
  for (int i = 0; i < 3; ++i) REQUIRE(g.at("a")[i] == 0.0);
}

TEST_CASE("recurrent and attention path gradients match finite differences", "[nn]") {
  const int d_in = 3, h = 2, n = 3;
  ModelParams params;
  params.tensors.emplace("l.fw.w_ih", rand_t({4 * h, d_in}));
  params.tensors.emplace("l.fw.w_hh", rand_t({4 * h, h}));
  params.tensors.emplace("l.fw.b", rand_t({4 * h}));
  params.tensors.emplace("l.bw.w_ih", rand_t({4 * h, d_in}));
  params.tensors.emplace("l.bw.w_hh", rand_t({4 * h, h}));
  params.tensors.emplace("l.bw.b", rand_t({4 * h}));
  params.tensors.emplace("wq", rand_t({2, d_in}));
  params.tensors.emplace("wk", rand_t({2, d_in}));
  params.tensors.emplace("wv", rand_t({2, d_in}));
  std::vector<Tensor> xs;
  for (int i = 0; i < n; ++i) xs.push_back(rand_t({d_in}));

  auto loss_of = [&](const ModelParams& p, GradMap* grads) {
    Tape t;
    ParamBinding pb(t, p);
    std::vector<Var> in;
    for (const auto& x : xs) in.push_back(t.leaf(x));
    auto rec = birnn_forward(pb, "l", in);
    auto att = self_attention(t, in, pb["wq"], pb["wk"], pb["wv"]);
    std::vector<Var> sums;
    for (int i = 0; i < n; ++i) {
      sums.push_back(t.sum(t.mul(rec[static_cast<std::size_t>(i)], rec[static_cast<std::size_t>(i)])));
      sums.push_back(t.sum(t.mul(att[static_cast<std::size_t>(i)], att[static_cast<std::size_t>(i)])));
    }
    Var loss = t.add_n(sums);
    double v = t.value(loss)[0];
    if (grads) *grads = grad_of(t, loss, pb, p);
    return v;
  };

  GradMap analytic;
  loss_of(params, &analytic);
  const double eps = 1e-5;
  std::mt19937_64 pick(3);
  for (const auto& [path, tensor] : params.tensors) {
    for (int probe = 0; probe < 3; ++probe) {
      std::int64_t idx = static_cast<std::int64_t>(pick() % static_cast<unsigned long>(tensor.numel()));
      ModelParams shifted = params;
      shifted.at(path)[idx] += eps;
      double up = loss_of(shifted, nullptr);
      shifted.at(path)[idx] -= 2 * eps;
      double down = loss_of(shifted, nullptr);
      double numeric = (up - down) / (2 * eps);
      double exact = analytic.at(path)[idx];
      INFO(path << "[" << idx << "]");
      REQUIRE_THAT(numeric, Catch::Matchers::WithinAbs(exact, 1e-5 * std::max(1.0, std::abs(exact))));
    }
  }
}

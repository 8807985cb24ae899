#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sslseg/nn/adam.hpp"
#include "sslseg/nn/graph.hpp"
#include "sslseg/nn/kernels.hpp"
#include "sslseg/parallel.hpp"

using namespace sslseg;
using namespace sslseg::nn;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
  return d;
}

struct ConvCase {
  int n, cin, cout, h, w, k;
};

// Restores the worker count when a test changes it.
struct WorkerGuard {
  int saved = num_workers();
  ~WorkerGuard() { set_num_workers(saved); }
};

}  // namespace

TEST_CASE("conv2d: optimised kernels match the serial reference") {
  for (const ConvCase c : {ConvCase{2, 3, 5, 7, 6, 3}, ConvCase{3, 4, 8, 5, 5, 1}, ConvCase{1, 2, 3, 9, 4, 5},
                           ConvCase{2, 16, 16, 8, 8, 3}}) {
    CAPTURE(c.cin);
    CAPTURE(c.k);
    const auto x = testutil::random_tensor(c.n, c.cin, c.h, c.w, 1);
    const auto wt = testutil::random_tensor(c.cout, c.cin, c.k, c.k, 2);
    const auto b = testutil::random_tensor(1, c.cout, 1, 1, 3);
    const auto dy = testutil::random_tensor(c.n, c.cout, c.h, c.w, 4);
    Tensor y1, y2;
    conv2d_forward(x, wt, b, y1);
    reference::conv2d_forward(x, wt, b, y2);
    CHECK(max_abs_diff(y1, y2) < 1e-4);

    Tensor dx1, dx2, dw1(c.cout, c.cin, c.k, c.k), dw2(c.cout, c.cin, c.k, c.k), db1(1, c.cout, 1, 1),
        db2(1, c.cout, 1, 1);
    conv2d_backward(x, wt, dy, &dx1, dw1, db1);
    reference::conv2d_backward(x, wt, dy, &dx2, dw2, db2);
    CHECK(max_abs_diff(dx1, dx2) < 1e-4);
    CHECK(max_abs_diff(dw1, dw2) < 1e-3);
    CHECK(max_abs_diff(db1, db2) < 1e-3);
  }
}

TEST_CASE("depthwise3x3: optimised kernels match the serial reference") {
  const auto x = testutil::random_tensor(3, 6, 7, 5, 10);
  const auto wt = testutil::random_tensor(6, 1, 3, 3, 11);
  const auto b = testutil::random_tensor(1, 6, 1, 1, 12);
  const auto dy = testutil::random_tensor(3, 6, 7, 5, 13);
  Tensor y1, y2;
  depthwise3x3_forward(x, wt, b, y1);
  reference::depthwise3x3_forward(x, wt, b, y2);
  CHECK(max_abs_diff(y1, y2) < 1e-5);
  Tensor dx1, dx2, dw1(6, 1, 3, 3), dw2(6, 1, 3, 3), db1(1, 6, 1, 1), db2(1, 6, 1, 1);
  depthwise3x3_backward(x, wt, dy, &dx1, dw1, db1);
  reference::depthwise3x3_backward(x, wt, dy, &dx2, dw2, db2);
  CHECK(max_abs_diff(dx1, dx2) < 1e-5);
  CHECK(max_abs_diff(dw1, dw2) < 1e-4);
  CHECK(max_abs_diff(db1, db2) < 1e-4);
}

TEST_CASE("kernels are bit-identical across worker counts") {
  WorkerGuard guard;
  const auto x = testutil::random_tensor(5, 8, 9, 9, 20);
  const auto wt = testutil::random_tensor(12, 8, 3, 3, 21);
  const auto b = testutil::random_tensor(1, 12, 1, 1, 22);
  const auto dy = testutil::random_tensor(5, 12, 9, 9, 23);
  auto run = [&](int workers) {
    set_num_workers(workers);
    Tensor y, dx, dw(12, 8, 3, 3), db(1, 12, 1, 1);
    conv2d_forward(x, wt, b, y);
    conv2d_backward(x, wt, dy, &dx, dw, db);
    std::vector<float> all(y.span().begin(), y.span().end());
    all.insert(all.end(), dx.span().begin(), dx.span().end());
    all.insert(all.end(), dw.span().begin(), dw.span().end());
    all.insert(all.end(), db.span().begin(), db.span().end());
    return all;
  };
  const auto one = run(1);
  CHECK(run(3) == one);
  CHECK(run(8) == one);
}

TEST_CASE("graph: reverse-mode gradients match central differences") {
  // conv -> relu -> maxpool -> upsample -> concat(x) -> depthwise -> add -> crop
  Parameter w1{"w1", testutil::random_tensor(4, 2, 3, 3, 30, 0.5f), {}};
  Parameter b1{"b1", testutil::random_tensor(1, 4, 1, 1, 31, 0.1f), {}};
  Parameter w2{"w2", testutil::random_tensor(6, 1, 3, 3, 32, 0.5f), {}};
  Parameter b2{"b2", testutil::random_tensor(1, 6, 1, 1, 33, 0.1f), {}};
  const auto x0 = testutil::random_tensor(2, 2, 6, 6, 34);
  const auto r = testutil::random_tensor(2, 6, 5, 4, 35);

  auto loss = [&](Tape* tape, const Tensor& input, Var* input_node) {
    auto x = constant(input);
    if (tape) x->requires_grad = true;
    if (input_node) *input_node = x;
    auto h = relu(tape, conv2d(tape, x, w1, b1));
    h = upsample2(tape, maxpool2(tape, h));
    auto cat = concat(tape, {h, x});
    auto d = depthwise3x3(tape, cat, w2, b2);
    auto out = crop(tape, add(tape, d, cat), 5, 4);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += static_cast<double>(r.data()[i]) * out->value.data()[i];
    return std::make_pair(s, out);
  };

  for (auto* p : {&w1, &b1, &w2, &b2}) p->zero_grad();
  Tape tape;
  Var xin;
  auto [value, out] = loss(&tape, x0, &xin);
  tape.backward(out, r);

  // small step: larger ones straddle relu / maxpool kinks
  const float h = 1e-3f;
  auto check_param = [&](Parameter& p) {
    for (std::size_t i = 0; i < p.value.size(); i += 3) {
      const float saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      const double up = loss(nullptr, x0, nullptr).first;
      p.value.data()[i] = saved - h;
      const double down = loss(nullptr, x0, nullptr).first;
      p.value.data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      CAPTURE(p.name);
      CAPTURE(i);
      CHECK(p.grad.data()[i] == doctest::Approx(fd).epsilon(2e-2).scale(1.0));
    }
  };
  check_param(w1);
  check_param(b1);
  check_param(w2);
  check_param(b2);

  for (std::size_t i = 0; i < x0.size(); i += 5) {
    Tensor xp = x0, xm = x0;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(nullptr, xp, nullptr).first - loss(nullptr, xm, nullptr).first) / (2.0 * h);
    CAPTURE(i);
    CHECK(xin->grad.data()[i] == doctest::Approx(fd).epsilon(2e-2).scale(1.0));
  }
}

TEST_CASE("graph: maxpool passes the gradient to the maximum only") {
  Tensor x(1, 1, 2, 2);
  x.data()[0] = 1.0f;
  x.data()[1] = 4.0f;
  x.data()[2] = -2.0f;
  x.data()[3] = 3.0f;
  Tape tape;
  auto in = constant(x);
  in->requires_grad = true;
  auto y = maxpool2(&tape, in);
  REQUIRE(y->value.size() == 1);
  CHECK(y->value.data()[0] == 4.0f);
  tape.backward(y, Tensor(1, 1, 1, 1, 2.0f));
  CHECK(in->grad.data()[0] == 0.0f);
  CHECK(in->grad.data()[1] == 2.0f);
  CHECK(in->grad.data()[2] == 0.0f);
  CHECK(in->grad.data()[3] == 0.0f);
}

TEST_CASE("adam: first step moves each weight by lr against the gradient sign; cosine decay endpoints") {
  Parameter p{"p", Tensor(1, 3, 1, 1, 1.0f), {}};
  p.zero_grad();
  p.grad.data()[0] = 0.5f;
  p.grad.data()[1] = -2.0f;
  p.grad.data()[2] = 0.0f;
  Adam adam({&p});
  adam.step(0.1);
  CHECK(adam.steps() == 1);
  CHECK(p.value.data()[0] == doctest::Approx(0.9).epsilon(1e-5));
  CHECK(p.value.data()[1] == doctest::Approx(1.1).epsilon(1e-5));
  CHECK(p.value.data()[2] == 1.0f);
  adam.zero_grad();
  CHECK(p.grad.data()[1] == 0.0f);

  CHECK(cosine_decay(0.01, 0, 100) == doctest::Approx(0.01));
  CHECK(cosine_decay(0.01, 50, 100) == doctest::Approx(0.005));
  CHECK(cosine_decay(0.01, 100, 100) == doctest::Approx(0.0));
}

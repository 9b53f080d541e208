#include <doctest.h>

#include <cmath>
#include <random>

#include "simplihumon/tensor.hpp"

using namespace simplihumon;

TEST_CASE("construction and accessors") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.shape() == Shape{2, 3});
  CHECK(z.numel() == 6);
  CHECK_FALSE(z.requires_grad());

  Tensor f = Tensor::full({2}, 1.5);
  CHECK(f.data() == std::vector<double>{1.5, 1.5});

  Tensor s = Tensor::scalar(4.0);
  CHECK(s.item() == 4.0);
  CHECK_THROWS_AS(f.item(), ShapeError);

  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
}

TEST_CASE("elementwise add sub mul values") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 2}, {10, 20, 30, 40});
  CHECK(add(a, b).data() == std::vector<double>{11, 22, 33, 44});
  CHECK(sub(b, a).data() == std::vector<double>{9, 18, 27, 36});
  CHECK(mul(a, b).data() == std::vector<double>{10, 40, 90, 160});
  Tensor c = Tensor::from_data({4}, {1, 2, 3, 4});
  CHECK_THROWS_AS(add(a, c), ShapeError);
  CHECK_THROWS_AS(mul(a, c), ShapeError);
}

TEST_CASE("matmul values and shape errors") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
  CHECK(matmul(a, b).data() == std::vector<double>{19, 22, 43, 50});

  Tensor id = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  CHECK(matmul(a, id).data() == a.data());

  Tensor r = Tensor::from_data({1, 3}, {1, 2, 3});
  Tensor col = Tensor::from_data({3, 1}, {4, 5, 6});
  CHECK(matmul(r, col).data() == std::vector<double>{32});

  Tensor v = Tensor::from_data({3}, {1, 2, 3});
  CHECK_THROWS_AS(matmul(v, col), ShapeError);
  CHECK_THROWS_AS(matmul(a, col), ShapeError);
}

TEST_CASE("concat slice round trip") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({1, 2}, {5, 6});
  Tensor cat0 = concat({a, b}, 0);
  CHECK(cat0.shape() == Shape{3, 2});
  CHECK(cat0.data() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(slice(cat0, 0, 2, 1).data() == std::vector<double>{5, 6});
  CHECK(slice(cat0, 0, 0, 2).data() == a.data());

  Tensor c = Tensor::from_data({2, 1}, {9, 8});
  Tensor cat1 = concat({a, c}, 1);
  CHECK(cat1.shape() == Shape{2, 3});
  CHECK(cat1.data() == std::vector<double>{1, 2, 9, 3, 4, 8});
  CHECK(slice(cat1, 1, 2, 1).data() == std::vector<double>{9, 8});

  CHECK_THROWS_AS(concat({a, c}, 0), ShapeError);
  CHECK_THROWS_AS(concat({}, 0), ShapeError);
  CHECK_THROWS_AS(slice(a, 0, 1, 2), ShapeError);
  CHECK_THROWS_AS(slice(a, 2, 0, 1), ShapeError);
  CHECK_THROWS_AS(slice(a, 0, 0, 0), ShapeError);
}

TEST_CASE("reshape transpose") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(a, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.data() == a.data());
  CHECK(reshape(a, {6}).shape() == Shape{6});
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);

  Tensor t = transpose(a);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.data() == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK_THROWS_AS(transpose(reshape(a, {6})), ShapeError);
}

TEST_CASE("reductions") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(sum_all(a).item() == 10.0);
  CHECK(mean_all(a).item() == 2.5);
  CHECK(sum_all(a).shape() == Shape{1});
}

TEST_CASE("gelu exact gaussian cdf form") {
  Tensor x = Tensor::from_data({3}, {0.0, 0.5, -0.5});
  Tensor y = gelu(x);
  CHECK(y.data()[0] == 0.0);
  // x * Phi(x) with Phi the standard normal cdf
  double phi_half = 0.5 * (1.0 + std::erf(0.5 / std::sqrt(2.0)));
  CHECK(y.data()[1] == doctest::Approx(0.5 * phi_half).epsilon(1e-12));
  CHECK(y.data()[2] == doctest::Approx(-0.5 * (1.0 - phi_half)).epsilon(1e-12));
}

TEST_CASE("gelu gradient matches finite differences") {
  // Central differences with h=1e-5 around +-0.5, frozen independently.
  Tensor x = Tensor::from_data({2}, {0.5, -0.5}, true);
  Graph g;
  g.backward(sum_all(gelu(x)));
  CHECK(x.grad()[0] == doctest::Approx(0.8674951246451608).epsilon(1e-9));
  CHECK(x.grad()[1] == doctest::Approx(0.1325048753548392).epsilon(1e-9));
}

TEST_CASE("softmax rows") {
  Tensor x = Tensor::from_data({3}, {0, 0, 0});
  auto y = softmax(x).data();
  CHECK(y[0] == doctest::Approx(1.0 / 3.0));
  CHECK(y[1] == doctest::Approx(1.0 / 3.0));

  // Max subtraction keeps large logits finite.
  Tensor big = Tensor::from_data({2, 2}, {1000.0, 1001.0, -1000.0, -999.0});
  auto yb = softmax(big).data();
  double e = std::exp(1.0);
  CHECK(yb[0] == doctest::Approx(1.0 / (1.0 + e)));
  CHECK(yb[1] == doctest::Approx(e / (1.0 + e)));
  CHECK(yb[2] == doctest::Approx(1.0 / (1.0 + e)));
  CHECK(yb[2] + yb[3] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rmsnorm values") {
  Tensor x = Tensor::from_data({4}, {3, 3, 3, 3});
  Tensor g = Tensor::full({4}, 1.0);
  auto y = rmsnorm(x, g).data();
  for (double v : y) CHECK(v == doctest::Approx(1.0).epsilon(1e-8));

  Tensor g2 = Tensor::from_data({4}, {2, 2, 2, 2});
  auto y2 = rmsnorm(x, g2).data();
  CHECK(y2[0] == doctest::Approx(2.0).epsilon(1e-8));

  // eps keeps the zero row finite
  Tensor z = Tensor::zeros({4});
  auto yz = rmsnorm(z, g).data();
  CHECK(yz[0] == 0.0);

  CHECK_THROWS_AS(rmsnorm(x, Tensor::full({3}, 1.0)), ShapeError);
}

TEST_CASE("layernorm values") {
  Tensor x = Tensor::from_data({2, 2}, {1, 3, -5, 5});
  Tensor g = Tensor::full({2}, 1.0);
  Tensor b = Tensor::zeros({2});
  auto y = layernorm(x, g, b).data();
  // row [1,3]: mean 2, population std 1
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(y[2] == doctest::Approx(-1.0).epsilon(1e-7));

  Tensor b2 = Tensor::from_data({2}, {10, 10});
  auto y2 = layernorm(x, g, b2).data();
  CHECK(y2[0] == doctest::Approx(9.0).epsilon(1e-7));
  CHECK_THROWS_AS(layernorm(x, g, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("sqrt square scale") {
  Tensor x = Tensor::from_data({3}, {4, 9, 16});
  CHECK(sqrt_elem(x).data() == std::vector<double>{2, 3, 4});
  CHECK(square(x).data() == std::vector<double>{16, 81, 256});
  CHECK(scale(x, 0.5).data() == std::vector<double>{2, 4.5, 8});
  CHECK_THROWS_AS(sqrt_elem(Tensor::from_data({1}, {-1.0})), NumericError);
}

TEST_CASE("broadcast semantics") {
  Tensor row = Tensor::from_data({1, 3}, {1, 2, 3});
  Tensor b = broadcast(row, {2, 3});
  CHECK(b.data() == std::vector<double>{1, 2, 3, 1, 2, 3});

  Tensor v = Tensor::from_data({3}, {1, 2, 3});
  CHECK(broadcast(v, {2, 3}).data() == std::vector<double>{1, 2, 3, 1, 2, 3});

  Tensor col = Tensor::from_data({2, 1}, {1, 2});
  CHECK(broadcast(col, {2, 3}).data() == std::vector<double>{1, 1, 1, 2, 2, 2});

  Tensor s = Tensor::scalar(7.0);
  CHECK(broadcast(s, {2, 2}).data() == std::vector<double>{7, 7, 7, 7});

  CHECK_THROWS_AS(broadcast(v, {2, 4}), ShapeError);
  CHECK_THROWS_AS(broadcast(Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}), {3}), ShapeError);
}

TEST_CASE("backward through sum of squares") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
  Graph g;
  Tensor loss = sum_all(square(x));
  CHECK(loss.item() == 14.0);
  g.backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4, 6});
}

TEST_CASE("backward through mean") {
  Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
  Graph g;
  g.backward(mean_all(x));
  for (double d : x.grad()) CHECK(d == 0.25);
}

TEST_CASE("backward matmul") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8}, true);
  Graph g;
  g.backward(sum_all(matmul(a, b)));
  // dA = ones . B^T, dB = A^T . ones
  CHECK(a.grad() == std::vector<double>{11, 15, 11, 15});
  CHECK(b.grad() == std::vector<double>{4, 4, 6, 6});
}

TEST_CASE("backward broadcast sums over expanded axes") {
  Tensor v = Tensor::from_data({1, 2}, {1, 2}, true);
  Graph g;
  Tensor w = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  g.backward(sum_all(mul(broadcast(v, {3, 2}), w)));
  CHECK(v.grad() == std::vector<double>{9, 12});
}

TEST_CASE("backward concat and slice route gradients") {
  Tensor a = Tensor::from_data({2}, {1, 2}, true);
  Tensor b = Tensor::from_data({2}, {3, 4}, true);
  Graph g;
  Tensor cat = concat({a, b}, 0);
  Tensor picked = slice(cat, 0, 1, 2);  // {2, 3}
  g.backward(sum_all(square(picked)));
  CHECK(a.grad() == std::vector<double>{0, 4});
  CHECK(b.grad() == std::vector<double>{6, 0});
}

TEST_CASE("gradients accumulate until cleared") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  {
    Graph g;
    g.backward(sum_all(x));
  }
  {
    Graph g;
    g.backward(sum_all(x));
  }
  CHECK(x.grad() == std::vector<double>{2, 2});
  x.zero_grad();
  CHECK(x.grad() == std::vector<double>{0, 0});
}

TEST_CASE("graph misuse") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Graph g;
  Tensor loss = sum_all(x);
  Tensor notscalar = square(x);
  CHECK_THROWS_AS(g.backward(notscalar), ShapeError);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), std::runtime_error);
  // The tape is spent: recording further work on it must fail loudly.
  CHECK_THROWS_AS(sum_all(x), std::runtime_error);
}

TEST_CASE("no recording outside a graph") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tensor y = square(x);
  CHECK_FALSE(y.requires_grad());
  {
    Graph g;
    CHECK(square(x).requires_grad());
    CHECK(g.node_count() == 1);
    // Constants do not grow the tape.
    square(Tensor::from_data({2}, {1, 2}));
    CHECK(g.node_count() == 1);
    g.backward(sum_all(square(x)));
  }
}

TEST_CASE("same inputs give identical outputs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> raw(12);
  for (auto& v : raw) v = d(rng);
  auto run = [&] {
    Tensor x = Tensor::from_data({3, 4}, raw);
    return rmsnorm(gelu(x), Tensor::full({4}, 1.0)).data();
  };
  CHECK(run() == run());
}

TEST_CASE("gradcheck on a quadratic") {
  Tensor x = Tensor::from_data({2}, {1, -1}, true);
  auto res = gradcheck([&] { return sum_all(square(x)); }, {x}, 1e-5);
  CHECK(res.max_rel_err < 1e-7);
}

TEST_CASE("gradcheck across the op set") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-0.9, 0.9);
  auto rnd = [&](Shape s, bool rg) {
    std::vector<double> v(shape_numel(s));
    for (auto& e : v) e = d(rng);
    return Tensor::from_data(s, v, rg);
  };

  Tensor a = rnd({3, 4}, true);
  Tensor b = rnd({4, 2}, true);
  Tensor gn = rnd({4}, true);
  Tensor bn = rnd({4}, true);
  Tensor row = rnd({1, 4}, true);

  auto f = [&] {
    Tensor h = add(a, broadcast(row, {3, 4}));
    h = rmsnorm(h, gn);
    h = gelu(h);
    h = mul(h, softmax(layernorm(a, gn, bn)));
    Tensor y = matmul(h, b);                     // {3,2}
    Tensor z = concat({y, scale(y, 2.0)}, 1);    // {3,4}
    z = slice(z, 1, 1, 2);                       // {3,2}
    z = reshape(z, {2, 3});
    z = transpose(z);
    Tensor ssq = sum_all(square(z));
    return sqrt_elem(add(ssq, Tensor::scalar(1.0)));
  };
  auto res = gradcheck(f, {a, b, gn, bn, row}, 1e-5);
  CAPTURE(res.worst_param);
  CAPTURE(res.analytic);
  CAPTURE(res.numeric);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck rejects bad step sizes") {
  Tensor x = Tensor::from_data({1}, {1.0}, true);
  auto f = [&] { return sum_all(x); };
  CHECK_THROWS_AS(gradcheck(f, {x}, 1e-8), ShapeError);
  CHECK_THROWS_AS(gradcheck(f, {x}, 1e-2), ShapeError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/QR>
#include <random>

#include "mvtrack/losses.hpp"
#include "mvtrack/network.hpp"
#include "mvtrack/train.hpp"
#include "test_util.hpp"

using namespace mvtrack;

namespace {

// Relative error between analytic and finite-difference gradient vectors.
double RelError(const VectorD& analytic, const VectorD& fd) {
  const double denom = std::max({analytic.norm(), fd.norm(), 1e-12});
  return (analytic - fd).norm() / denom;
}

// Straight-line re-implementation of the stack for the forward oracle:
// explicit loops, no Eigen products.
MatrixD ForwardOracle(const ModelParams& params, const NetworkConfig& config,
                      const MatrixD& batch) {
  MatrixD x = batch;
  const int num_layers = config.NumLayers();
  for (int l = 0; l < num_layers; ++l) {
    const MatrixD& w = params.layers[l].weight;
    const VectorD& b = params.layers[l].bias;
    MatrixD z(w.rows(), x.cols());
    for (int c = 0; c < x.cols(); ++c) {
      for (int r = 0; r < w.rows(); ++r) {
        double acc = b(r);
        for (int k = 0; k < w.cols(); ++k) acc += w(r, k) * x(k, c);
        z(r, c) = acc;
      }
    }
    const bool last = l + 1 == num_layers;
    if (!last || config.activate_output) {
      for (int c = 0; c < z.cols(); ++c)
        for (int r = 0; r < z.rows(); ++r) {
          if (config.activation == Activation::kRelu)
            z(r, c) = z(r, c) > 0.0 ? z(r, c) : 0.0;
          else
            z(r, c) = 1.0 / (1.0 + std::exp(-z(r, c)));
        }
    }
    x = std::move(z);
  }
  return x;
}

NetworkConfig SmallNet(bool batch_norm = false, double dropout = 0.0,
                       Activation act = Activation::kRelu) {
  NetworkConfig c;
  c.layer_sizes = {7, 6, 4};
  c.activation = act;
  c.dropout_rate = dropout;
  c.batch_norm = batch_norm;
  return c;
}

}  // namespace

TEST_CASE("forward") {
  std::mt19937_64 rng(51);

  SUBCASE("identity single layer reproduces the input") {
    NetworkConfig c;
    c.layer_sizes = {5, 5};
    ModelParams p = ModelParams::Init(c, rng);
    p.layers[0].weight = MatrixD::Identity(5, 5);
    p.layers[0].bias = VectorD::Zero(5);
    MatrixD x = testutil::RandomMatrix(5, 9, rng);
    MatrixD y = forward(p, c, x, RunMode::kInfer, nullptr);
    CHECK((y - x).lpNorm<Eigen::Infinity>() < 1e-15);
  }

  SUBCASE("dropout rate 0 in train mode equals infer mode") {
    NetworkConfig c = SmallNet(false, 0.0);
    ModelParams p = ModelParams::Init(c, rng);
    MatrixD x = testutil::RandomMatrix(7, 12, rng);
    std::mt19937_64 r1(1);
    MatrixD train_out = forward(p, c, x, RunMode::kTrain, &r1);
    MatrixD infer_out = forward(p, c, x, RunMode::kInfer, nullptr);
    CHECK((train_out - infer_out).lpNorm<Eigen::Infinity>() < 1e-15);
  }

  SUBCASE("random configs match the straight-line oracle") {
    for (int trial = 0; trial < 25; ++trial) {
      NetworkConfig c;
      c.layer_sizes = {4 + static_cast<int>(rng() % 5), 3 + static_cast<int>(rng() % 6),
                       2 + static_cast<int>(rng() % 4)};
      if (rng() % 2) c.layer_sizes.push_back(3);
      c.activation = rng() % 2 ? Activation::kRelu : Activation::kSigmoid;
      c.activate_output = rng() % 2 == 0;
      c.dropout_rate = 0.0;
      ModelParams p = ModelParams::Init(c, rng);
      MatrixD x = testutil::RandomMatrix(c.InputDim(), 5, rng);
      MatrixD got = forward(p, c, x, RunMode::kInfer, nullptr);
      CHECK((got - ForwardOracle(p, c, x)).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }

  SUBCASE("shape mismatch and non-finite propagation are reported") {
    NetworkConfig c = SmallNet();
    ModelParams p = ModelParams::Init(c, rng);
    CHECK_THROWS_AS(forward(p, c, MatrixD::Zero(5, 3), RunMode::kInfer, nullptr), ValueError);
    p.layers[1].weight(0, 0) = std::numeric_limits<double>::infinity();
    MatrixD x = MatrixD::Ones(7, 2);
    CHECK_THROWS_WITH_AS(forward(p, c, x, RunMode::kInfer, nullptr),
                         doctest::Contains("layer 1"), NumericError);
  }

  SUBCASE("dropout keeps activations unbiased in expectation") {
    NetworkConfig c = SmallNet(false, 0.5);
    ModelParams p = ModelParams::Init(c, rng);
    MatrixD x = MatrixD::Ones(7, 1);
    std::mt19937_64 drop_rng(9);
    MatrixD mean = MatrixD::Zero(4, 1);
    const int reps = 4000;
    for (int i = 0; i < reps; ++i)
      mean += forward(p, c, x, RunMode::kTrain, &drop_rng);
    mean /= static_cast<double>(reps);
    MatrixD infer = forward(p, c, x, RunMode::kInfer, nullptr);
    // Output layer is linear, so E[train output] == infer output.
    CHECK((mean - infer).lpNorm<Eigen::Infinity>() < 0.15);
  }
}

TEST_CASE("backward finite differences per layer type") {
  std::mt19937_64 rng(52);
  const double h = 1e-6;

  // Scalar probe loss: sum of squares of the output, gradient 2*output.
  auto check_config = [&](const NetworkConfig& c, int trials) {
    for (int t = 0; t < trials; ++t) {
      ModelParams p = ModelParams::Init(c, rng);
      MatrixD x = testutil::RandomMatrix(c.InputDim(), 4, rng);

      // Fixed dropout masks: reuse one seeded rng state per evaluation.
      const std::uint64_t drop_seed = rng();
      auto run = [&](ModelParams& params, const MatrixD& input, ForwardCache* cache) {
        std::mt19937_64 drop_rng(drop_seed);
        return forward(params, c, input, RunMode::kTrain, &drop_rng, cache);
      };

      ForwardCache cache;
      ModelParams work = p;
      MatrixD out = run(work, x, &cache);
      Gradients grads = backward(p, c, cache, 2.0 * out);

      auto loss_at = [&](ModelParams& params, const MatrixD& input) {
        ModelParams tmp = params;  // keep running BN stats out of the probe
        return run(tmp, input, nullptr).squaredNorm();
      };

      // Weights and biases of every layer.
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        VectorD analytic(p.layers[l].weight.size() + p.layers[l].bias.size());
        VectorD fd(analytic.size());
        int slot = 0;
        for (int c2 = 0; c2 < p.layers[l].weight.cols(); ++c2)
          for (int r = 0; r < p.layers[l].weight.rows(); ++r) {
            ModelParams plus = p, minus = p;
            plus.layers[l].weight(r, c2) += h;
            minus.layers[l].weight(r, c2) -= h;
            fd(slot) = (loss_at(plus, x) - loss_at(minus, x)) / (2.0 * h);
            analytic(slot++) = grads.layers[l].weight(r, c2);
          }
        for (int r = 0; r < p.layers[l].bias.size(); ++r) {
          ModelParams plus = p, minus = p;
          plus.layers[l].bias(r) += h;
          minus.layers[l].bias(r) -= h;
          fd(slot) = (loss_at(plus, x) - loss_at(minus, x)) / (2.0 * h);
          analytic(slot++) = grads.layers[l].bias(r);
        }
        CHECK(RelError(analytic, fd) < 1e-4);

        if (p.layers[l].bn_scale.size()) {
          VectorD bn_analytic(2 * p.layers[l].bn_scale.size());
          VectorD bn_fd(bn_analytic.size());
          int bs = 0;
          for (int r = 0; r < p.layers[l].bn_scale.size(); ++r) {
            ModelParams plus = p, minus = p;
            plus.layers[l].bn_scale(r) += h;
            minus.layers[l].bn_scale(r) -= h;
            bn_fd(bs) = (loss_at(plus, x) - loss_at(minus, x)) / (2.0 * h);
            bn_analytic(bs++) = grads.layers[l].bn_scale(r);
          }
          for (int r = 0; r < p.layers[l].bn_shift.size(); ++r) {
            ModelParams plus = p, minus = p;
            plus.layers[l].bn_shift(r) += h;
            minus.layers[l].bn_shift(r) -= h;
            bn_fd(bs) = (loss_at(plus, x) - loss_at(minus, x)) / (2.0 * h);
            bn_analytic(bs++) = grads.layers[l].bn_shift(r);
          }
          CHECK(RelError(bn_analytic, bn_fd) < 1e-4);
        }
      }

      // Input gradient.
      VectorD in_analytic(x.size()), in_fd(x.size());
      int slot = 0;
      for (int c2 = 0; c2 < x.cols(); ++c2)
        for (int r = 0; r < x.rows(); ++r) {
          MatrixD plus = x, minus = x;
          plus(r, c2) += h;
          minus(r, c2) -= h;
          in_fd(slot) = (loss_at(p, plus) - loss_at(p, minus)) / (2.0 * h);
          in_analytic(slot++) = grads.input(r, c2);
        }
      CHECK(RelError(in_analytic, in_fd) < 1e-4);
    }
  };

  SUBCASE("plain relu stack") { check_config(SmallNet(false, 0.0, Activation::kRelu), 10); }
  SUBCASE("sigmoid stack") { check_config(SmallNet(false, 0.0, Activation::kSigmoid), 10); }
  SUBCASE("dropout with frozen masks") { check_config(SmallNet(false, 0.3), 10); }
  SUBCASE("batch norm") { check_config(SmallNet(true, 0.0), 10); }
  SUBCASE("batch norm with sigmoid and dropout") {
    NetworkConfig c = SmallNet(true, 0.2, Activation::kSigmoid);
    check_config(c, 10);
  }
}

TEST_CASE("imp_triplet_loss") {
  std::mt19937_64 rng(53);

  SUBCASE("satisfied constraints give zero loss and gradients") {
    MatrixD a = MatrixD::Zero(3, 2);
    MatrixD p = a;
    MatrixD n = MatrixD::Constant(3, 2, 10.0);
    TripletLossGrad lg = imp_triplet_loss(a, p, n, 0.5, 0.25, 0.0);
    CHECK(lg.loss == doctest::Approx(0.0));
    CHECK(lg.grad_anchor.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
    CHECK(lg.grad_negative.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
  }

  SUBCASE("fully collapsed triple pays both margins") {
    MatrixD a = MatrixD::Constant(3, 4, 0.7);
    TripletLossGrad lg = imp_triplet_loss(a, a, a, 0.5, 0.25, 0.0);
    CHECK(lg.loss == doctest::Approx(0.75));
  }

  SUBCASE("gradients match central finite differences") {
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
      const int d = 2 + static_cast<int>(rng() % 6);
      const int b = 1 + static_cast<int>(rng() % 5);
      MatrixD a = testutil::RandomMatrix(d, b, rng, 0.5);
      MatrixD p = testutil::RandomMatrix(d, b, rng, 0.5);
      MatrixD n = testutil::RandomMatrix(d, b, rng, 0.5);
      TripletLossGrad lg = imp_triplet_loss(a, p, n);

      auto fd_check = [&](MatrixD& target, const MatrixD& analytic) {
        VectorD av(target.size()), fv(target.size());
        int slot = 0;
        for (int c = 0; c < target.cols(); ++c)
          for (int r = 0; r < target.rows(); ++r) {
            const double saved = target(r, c);
            target(r, c) = saved + h;
            const double up = imp_triplet_loss(a, p, n).loss;
            target(r, c) = saved - h;
            const double down = imp_triplet_loss(a, p, n).loss;
            target(r, c) = saved;
            fv(slot) = (up - down) / (2.0 * h);
            av(slot++) = analytic(r, c);
          }
        CHECK(RelError(av, fv) < 1e-4);
      };
      fd_check(a, lg.grad_anchor);
      fd_check(p, lg.grad_positive);
      fd_check(n, lg.grad_negative);
    }
  }

  SUBCASE("invariant to a common rotation") {
    const int d = 5;
    MatrixD a = testutil::RandomMatrix(d, 6, rng);
    MatrixD p = testutil::RandomMatrix(d, 6, rng);
    MatrixD n = testutil::RandomMatrix(d, 6, rng);
    Eigen::HouseholderQR<MatrixD> qr(testutil::RandomMatrix(d, d, rng));
    MatrixD q = qr.householderQ();
    const double base = imp_triplet_loss(a, p, n).loss;
    const double rotated = imp_triplet_loss(q * a, q * p, q * n).loss;
    CHECK(rotated == doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("mvcorr_batch_loss") {
  std::mt19937_64 rng(54);

  SUBCASE("identical views touch the minimum -(M-1)") {
    MatrixD z = testutil::RandomMatrix(4, 12, rng);
    for (int m : {2, 3, 4}) {
      std::vector<MatrixD> views(m, z);
      MvCorrLossGrad lg = mvcorr_batch_loss(views);
      CHECK(lg.loss == doctest::Approx(-(m - 1.0)).epsilon(1e-9));
      for (const MatrixD& g : lg.grads)
        CHECK(g.lpNorm<Eigen::Infinity>() < 1e-9);
    }
  }

  SUBCASE("independent views give loss near zero") {
    std::vector<MatrixD> views;
    for (int v = 0; v < 3; ++v) views.push_back(testutil::RandomMatrix(4, 20000, rng));
    CHECK(std::abs(mvcorr_batch_loss(views).loss) < 0.05);
  }

  SUBCASE("degenerate batch errors") {
    std::vector<MatrixD> views(2, MatrixD::Constant(3, 5, 1.0));
    CHECK_THROWS_AS(mvcorr_batch_loss(views), NumericError);
  }

  SUBCASE("gradients match central finite differences") {
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
      const int m = 2 + static_cast<int>(rng() % 3);
      const int r = 2 + static_cast<int>(rng() % 4);
      const int b = 3 + static_cast<int>(rng() % 6);
      std::vector<MatrixD> views;
      for (int v = 0; v < m; ++v) views.push_back(testutil::RandomMatrix(r, b, rng));
      MvCorrLossGrad lg = mvcorr_batch_loss(views);

      for (int v = 0; v < m; ++v) {
        VectorD av(views[v].size()), fv(views[v].size());
        int slot = 0;
        for (int c = 0; c < views[v].cols(); ++c)
          for (int row = 0; row < views[v].rows(); ++row) {
            const double saved = views[v](row, c);
            views[v](row, c) = saved + h;
            const double up = mvcorr_batch_loss(views).loss;
            views[v](row, c) = saved - h;
            const double down = mvcorr_batch_loss(views).loss;
            views[v](row, c) = saved;
            fv(slot) = (up - down) / (2.0 * h);
            av(slot++) = lg.grads[v](row, c);
          }
        CHECK(RelError(av, fv) < 1e-4);
      }
    }
  }

  SUBCASE("invariant to view order and common orthogonal rotation") {
    const int r = 5;
    std::vector<MatrixD> views;
    for (int v = 0; v < 3; ++v) views.push_back(testutil::RandomMatrix(r, 15, rng));
    const double base = mvcorr_batch_loss(views).loss;

    std::vector<MatrixD> perm{views[2], views[0], views[1]};
    CHECK(mvcorr_batch_loss(perm).loss == doctest::Approx(base).epsilon(1e-12));

    Eigen::HouseholderQR<MatrixD> qr(testutil::RandomMatrix(r, r, rng));
    MatrixD q = qr.householderQ();
    std::vector<MatrixD> rotated;
    for (const MatrixD& v : views) rotated.push_back(q * v);
    CHECK(mvcorr_batch_loss(rotated).loss == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("early stopper") {
  SUBCASE("constructed schedule stops exactly at the eighth epoch") {
    EarlyStopper stopper(1e-3, 5);
    const std::vector<double> schedule{1.0, 0.9, 0.899, 0.8985, 0.898,
                                       0.8978, 0.8977, 0.8976};
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      const bool stop = stopper.ShouldStop(schedule[i]);
      if (i + 1 < schedule.size()) {
        CHECK_FALSE(stop);
      } else {
        CHECK(stop);
      }
    }
  }
  SUBCASE("a fresh large improvement resets the streak") {
    EarlyStopper stopper(1e-3, 2);
    CHECK_FALSE(stopper.ShouldStop(1.0));
    CHECK_FALSE(stopper.ShouldStop(0.9999));  // streak 1
    CHECK_FALSE(stopper.ShouldStop(0.5));     // reset
    CHECK_FALSE(stopper.ShouldStop(0.4999));  // streak 1
    CHECK(stopper.ShouldStop(0.49985));       // streak 2 -> stop
  }
  SUBCASE("increases count toward the streak") {
    EarlyStopper stopper(1e-3, 3);
    CHECK_FALSE(stopper.ShouldStop(1.0));
    CHECK_FALSE(stopper.ShouldStop(1.5));
    CHECK_FALSE(stopper.ShouldStop(2.0));
    CHECK(stopper.ShouldStop(2.5));
  }
}

namespace {

std::vector<MultiviewSample> ToySamples(int n, int d, std::mt19937_64& rng) {
  std::vector<MultiviewSample> out;
  for (int i = 0; i < n; ++i) {
    MultiviewSample s;
    s.track_id = i;
    s.anchor = testutil::RandomMatrix(d, 1, rng);
    s.positives = {s.anchor + 0.1 * testutil::RandomMatrix(d, 1, rng),
                   s.anchor + 0.1 * testutil::RandomMatrix(d, 1, rng)};
    s.hard_negative = testutil::RandomMatrix(d, 1, rng);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("train") {
  std::mt19937_64 rng(55);
  const int d = 6;
  auto train_set = ToySamples(40, d, rng);
  auto val_set = ToySamples(12, d, rng);

  NetworkConfig net;
  net.layer_sizes = {d, 8, 4};
  net.dropout_rate = 0.2;

  TrainConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 5;
  tc.seed = 77;

  SUBCASE("learning rate zero leaves the initialization untouched") {
    TrainConfig frozen = tc;
    frozen.learning_rate = 0.0;
    TrainHistory history;
    TrainedModel model = train(train_set, val_set, net, frozen, Objective::kMvCorr, &history);
    std::mt19937_64 init_rng(frozen.seed);
    // Independent nets draw from the same stream in order.
    for (const ModelParams& nw : model.networks) {
      ModelParams expect = ModelParams::Init(net, init_rng);
      for (std::size_t l = 0; l < expect.layers.size(); ++l) {
        CHECK(nw.layers[l].weight == expect.layers[l].weight);
        CHECK(nw.layers[l].bias == expect.layers[l].bias);
      }
    }
  }

  SUBCASE("fixed seed reruns are bit-identical") {
    for (Objective obj : {Objective::kImpTriplet, Objective::kMvCorr}) {
      TrainHistory h1, h2;
      TrainedModel m1 = train(train_set, val_set, net, tc, obj, &h1);
      TrainedModel m2 = train(train_set, val_set, net, tc, obj, &h2);
      REQUIRE(h1.train_loss.size() == h2.train_loss.size());
      for (std::size_t i = 0; i < h1.train_loss.size(); ++i) {
        CHECK(h1.train_loss[i] == h2.train_loss[i]);
        CHECK(h1.val_loss[i] == h2.val_loss[i]);
      }
      REQUIRE(m1.networks.size() == m2.networks.size());
      for (std::size_t nw = 0; nw < m1.networks.size(); ++nw)
        for (std::size_t l = 0; l < m1.networks[nw].layers.size(); ++l)
          CHECK(m1.networks[nw].layers[l].weight == m2.networks[nw].layers[l].weight);
    }
  }

  SUBCASE("mvcorr trains independent networks, triplet a shared one") {
    TrainHistory history;
    TrainedModel mv = train(train_set, val_set, net, tc, Objective::kMvCorr, &history);
    CHECK(mv.networks.size() == 3);
    TrainedModel trip = train(train_set, val_set, net, tc, Objective::kImpTriplet, &history);
    CHECK(trip.networks.size() == 1);
  }

  SUBCASE("mvcorr training reduces the validation loss on learnable data") {
    TrainConfig longer = tc;
    longer.max_epochs = 30;
    longer.batch_size = 16;
    TrainHistory history;
    train(train_set, val_set, net, longer, Objective::kMvCorr, &history);
    REQUIRE(history.val_loss.size() >= 2);
    CHECK(history.val_loss[history.best_epoch] < history.val_loss.front());
  }

  SUBCASE("empty split is rejected") {
    TrainHistory history;
    CHECK_THROWS_AS(train({}, val_set, net, tc, Objective::kMvCorr, &history), ValueError);
  }

  SUBCASE("divergence aborts with the history collected so far") {
    TrainConfig wild = tc;
    wild.learning_rate = 1e14;
    wild.max_epochs = 50;
    TrainHistory history;
    CHECK_THROWS_AS(train(train_set, val_set, net, wild, Objective::kImpTriplet, &history),
                    NumericError);
  }
}

TEST_CASE("adapt_embeddings") {
  std::mt19937_64 rng(56);

  SUBCASE("identity single layer returns normalized input") {
    NetworkConfig c;
    c.layer_sizes = {4, 4};
    TrainedModel model;
    model.config = c;
    ModelParams p = ModelParams::Init(c, rng);
    p.layers[0].weight = MatrixD::Identity(4, 4);
    p.layers[0].bias = VectorD::Zero(4);
    model.networks = {p};
    MatrixD means = testutil::RandomMatrix(4, 7, rng);
    MatrixD out = adapt_embeddings(model, means);
    for (int i = 0; i < 7; ++i) {
      CHECK(out.col(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK((out.col(i) - means.col(i).normalized()).norm() < 1e-12);
    }
  }

  SUBCASE("batch equals one-at-a-time application") {
    NetworkConfig c = SmallNet(false, 0.2);
    TrainedModel model;
    model.config = c;
    std::mt19937_64 init(3);
    model.networks = {ModelParams::Init(c, init)};
    MatrixD means = testutil::RandomMatrix(7, 10, rng);
    MatrixD batch = adapt_embeddings(model, means);
    for (int i = 0; i < 10; ++i) {
      MatrixD single = adapt_embeddings(model, MatrixD(means.col(i)));
      CHECK((batch.col(i) - single.col(0)).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(57);
  testutil::TempDir dir("net_io");
  NetworkConfig c = SmallNet(true, 0.2);
  TrainedModel model;
  model.config = c;
  model.objective = Objective::kMvCorr;
  model.networks = {ModelParams::Init(c, rng), ModelParams::Init(c, rng),
                    ModelParams::Init(c, rng)};
  const auto path = dir.path() / "checkpoint.tmvc";
  write_checkpoint(path, model);
  TrainedModel loaded = load_checkpoint(path);
  CHECK(loaded.objective == Objective::kMvCorr);
  CHECK(loaded.config.layer_sizes == c.layer_sizes);
  CHECK(loaded.config.batch_norm == c.batch_norm);
  REQUIRE(loaded.networks.size() == 3);
  for (std::size_t nw = 0; nw < 3; ++nw)
    for (std::size_t l = 0; l < loaded.networks[nw].layers.size(); ++l) {
      CHECK((loaded.networks[nw].layers[l].weight - model.networks[nw].layers[l].weight)
                .lpNorm<Eigen::Infinity>() < 1e-6);
      if (model.networks[nw].layers[l].bn_scale.size())
        CHECK((loaded.networks[nw].layers[l].bn_run_var -
               model.networks[nw].layers[l].bn_run_var)
                  .lpNorm<Eigen::Infinity>() < 1e-6);
    }
}

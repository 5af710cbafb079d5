#include "maskface/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maskface/errors.hpp"
#include "maskface/ops.hpp"
#include "maskface/resnet50.hpp"

namespace maskface {

namespace {

double central_difference(const ScalarFunction& f, std::span<Tensor> inputs, std::span<float> values, std::size_t j,
                          float eps) {
  const float original = values[j];
  const float hi = original + eps;
  const float lo = original - eps;
  values[j] = hi;
  const double f_hi = f(inputs, nullptr).item();
  values[j] = lo;
  const double f_lo = f(inputs, nullptr).item();
  values[j] = original;
  // Divide by the step actually taken in f32.
  return (f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
}

}  // namespace

float grad_check(const ScalarFunction& f, std::span<Tensor> inputs, float eps) {
  if (!(eps > 0.0f)) throw ParameterError("grad_check: eps must be > 0");
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }

  Tape tape;
  Tensor loss = f(inputs, &tape);
  if (loss.numel() != 1) throw ContractError("grad_check: function output is not a scalar");
  backward(loss, tape);

  double worst = 0.0;
  for (auto& in : inputs) {
    std::vector<float> analytic(static_cast<std::size_t>(in.numel()), 0.0f);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    auto values = in.data();
    double max_diff = 0.0;
    double scale = 1e-6;
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double a = analytic[j];
      // A step that crosses a relu/max kink gives a meaningless difference
      // quotient; a wrong analytic gradient disagrees at every step size.
      double best_diff = 0.0;
      double numeric_at_eps = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double numeric = central_difference(f, inputs, values, j, eps / static_cast<float>(1 << (2 * k)));
        if (k == 0) numeric_at_eps = numeric;
        const double diff = std::abs(a - numeric);
        if (k == 0 || diff < best_diff) best_diff = diff;
      }
      max_diff = std::max(max_diff, best_diff);
      scale = std::max({scale, std::abs(a), std::abs(numeric_at_eps)});
    }
    worst = std::max(worst, max_diff / scale);
  }
  return static_cast<float>(worst);
}

// ---------------------------------------------------------------------------

namespace {

Tensor random_tensor(Shape shape, Prng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Values with magnitude in [0.2, 1.0] and random sign, clear of relu kinks.
Tensor away_from_zero(Shape shape, Prng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) {
    const float m = 0.2f + 0.8f * rng.uniform();
    v = rng.uniform() < 0.5f ? -m : m;
  }
  return t;
}

// Distinct values 0.05 apart in random order, so no window max ties under eps.
Tensor distinct_values(Shape shape, Prng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  auto d = t.data();
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t i = 0; i < d.size(); ++i) d[order[i]] = 0.05f * static_cast<float>(i) - 1.0f;
  return t;
}

// Weighted readout sum(y * r) keeps every output element's gradient distinct.
Tensor readout(const Tensor& y, const Tensor& weights, Tape* tape) { return sum(mul(y, weights, tape), tape); }

}  // namespace

std::vector<GradCheckCase> run_grad_check_suite(std::uint64_t seed) {
  Prng rng(seed);
  std::vector<GradCheckCase> results;
  auto run = [&](std::string name, const ScalarFunction& f, std::vector<Tensor> inputs) {
    results.push_back({std::move(name), grad_check(f, inputs)});
  };

  {
    Tensor r = random_tensor({2, 4, 3, 3}, rng);
    run("conv2d",
        [r](std::span<Tensor> in, Tape* t) { return readout(conv2d(in[0], in[1], in[2], {2, 1}, t), r, t); },
        {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 3, 3}, rng, -0.5f, 0.5f), random_tensor({4}, rng)});
  }
  {
    Tensor r = random_tensor({4, 3, 4, 4}, rng);
    run("batchnorm2d_train",
        [r](std::span<Tensor> in, Tape* t) {
          Tensor rm = Tensor::zeros({3});
          Tensor rv = Tensor::full({3}, 1.0f);
          return readout(batchnorm2d(in[0], in[1], in[2], rm, rv, {1e-5f, 0.1f, true}, t), r, t);
        },
        {random_tensor({4, 3, 4, 4}, rng), random_tensor({3}, rng, 0.5f, 1.5f), random_tensor({3}, rng)});
  }
  {
    Tensor r = random_tensor({2, 3, 4, 4}, rng);
    Tensor rm = random_tensor({3}, rng);
    Tensor rv = random_tensor({3}, rng, 0.5f, 2.0f);
    run("batchnorm2d_eval",
        [r, rm, rv](std::span<Tensor> in, Tape* t) mutable {
          return readout(batchnorm2d(in[0], in[1], in[2], rm, rv, {1e-5f, 0.1f, false}, t), r, t);
        },
        {random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng, 0.5f, 1.5f), random_tensor({3}, rng)});
  }
  {
    Tensor r = random_tensor({2, 2, 3, 3}, rng);
    run("max_pool2d",
        [r](std::span<Tensor> in, Tape* t) { return readout(pool2d(in[0], PoolMode::kMax, 3, 2, 1, t), r, t); },
        {distinct_values({2, 2, 6, 6}, rng)});
  }
  {
    Tensor r = random_tensor({2, 3, 1, 1}, rng);
    run("global_avg_pool",
        [r](std::span<Tensor> in, Tape* t) { return readout(pool2d(in[0], PoolMode::kGlobalAvg, 0, 0, 0, t), r, t); },
        {random_tensor({2, 3, 5, 5}, rng)});
  }
  {
    Tensor r = random_tensor({4, 5}, rng);
    run("linear", [r](std::span<Tensor> in, Tape* t) { return readout(linear(in[0], in[1], in[2], t), r, t); },
        {random_tensor({4, 8}, rng), random_tensor({5, 8}, rng), random_tensor({5}, rng)});
  }
  {
    Tensor r = random_tensor({3, 8}, rng);
    run("relu", [r](std::span<Tensor> in, Tape* t) { return readout(relu(in[0], t), r, t); },
        {away_from_zero({3, 8}, rng)});
  }
  {
    Tensor r = random_tensor({3, 8}, rng);
    run("dropout",
        [r](std::span<Tensor> in, Tape* t) {
          Prng drop_rng(99);
          return readout(dropout(in[0], 0.5f, true, drop_rng, t), r, t);
        },
        {random_tensor({3, 8}, rng)});
  }
  {
    std::vector<int> targets = {0, 5, 2, 3};
    run("softmax_cross_entropy",
        [targets](std::span<Tensor> in, Tape* t) { return softmax_cross_entropy(in[0], targets, t); },
        {random_tensor({4, 6}, rng, -2.0f, 2.0f)});
  }
  {
    std::vector<int> targets = {2};
    run("conv_relu_linear_cross_entropy",
        [targets](std::span<Tensor> in, Tape* t) {
          Tensor h = relu(conv2d(in[0], in[1], in[2], {2, 1}, t), t);
          return softmax_cross_entropy(linear(flatten(h), in[3], in[4], t), targets, t);
        },
        {random_tensor({1, 3, 8, 8}, rng), random_tensor({2, 3, 3, 3}, rng, -0.5f, 0.5f), random_tensor({2}, rng),
         random_tensor({4, 32}, rng, -0.3f, 0.3f), random_tensor({4}, rng)});
  }

  // Bottleneck blocks: the block's tensors are the checked inputs.
  auto block_case = [&](std::string name, BottleneckSpec spec, Shape in_shape, bool training) {
    Prng init(rng.next());
    auto params = BottleneckParams::init(spec, init);
    std::vector<Tensor> inputs = {random_tensor(std::move(in_shape), rng)};
    for (auto& nt : params.state("b")) {
      if (nt.name.ends_with("running_mean") || nt.name.ends_with("running_var")) continue;
      inputs.push_back(nt.tensor);
    }
    // Perturb batch-norm affine terms away from the 1/0 defaults.
    for (auto* bn : {&params.bn1, &params.bn2, &params.bn3}) {
      for (auto& v : bn->weight.data()) v = 0.5f + rng.uniform();
      for (auto& v : bn->bias.data()) v = rng.uniform() - 0.5f;
    }
    Tensor probe = bottleneck_forward(spec, params, inputs[0].clone(), false);
    Tensor r = random_tensor(probe.shape(), rng);
    run(std::move(name),
        [spec, params, r, training](std::span<Tensor> in, Tape* t) mutable {
          return readout(bottleneck_forward(spec, params, in[0], training, t), r, t);
        },
        std::move(inputs));
  };
  block_case("bottleneck_identity_train", BottleneckSpec::make(8, 2, 1), {2, 8, 4, 4}, true);
  block_case("bottleneck_projection_eval", BottleneckSpec::make(4, 2, 2), {2, 4, 5, 5}, false);

  {
    Prng init(rng.next());
    auto s1 = BottleneckSpec::make(4, 2, 2);
    auto s2 = BottleneckSpec::make(8, 2, 1);
    auto p1 = BottleneckParams::init(s1, init);
    auto p2 = BottleneckParams::init(s2, init);
    std::vector<Tensor> inputs = {random_tensor({2, 4, 6, 6}, rng), random_tensor({3, 8}, rng),
                                  random_tensor({3}, rng)};
    for (const auto* p : {&p1, &p2}) {
      for (auto& nt : p->state("b")) {
        if (nt.name.ends_with("running_mean") || nt.name.ends_with("running_var")) continue;
        inputs.push_back(nt.tensor);
      }
    }
    std::vector<int> targets = {1, 2};
    run("two_block_network",
        [s1, s2, p1, p2, targets](std::span<Tensor> in, Tape* t) mutable {
          Tensor h = bottleneck_forward(s1, p1, in[0], true, t);
          h = bottleneck_forward(s2, p2, h, true, t);
          h = flatten(pool2d(h, PoolMode::kGlobalAvg, 0, 0, 0, t));
          return softmax_cross_entropy(linear(h, in[1], in[2], t), targets, t);
        },
        std::move(inputs));
  }
  return results;
}

}  // namespace maskface

#pragma once

// Central finite-difference check of Mlp::backward in double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pbrs/neural.hpp"
#include "pbrs/rng.hpp"

namespace pbrs {

struct GradCheckOptions {
  double h = 1e-3;
  int batch = 3;
  // Parameters checked per case; every parameter when the net is smaller.
  std::size_t max_params = 2000;
  // Denominator floor of the relative error. Below it the O(h^2) truncation
  // of the tanh head dominates tiny gradients, so they are compared on an
  // absolute scale.
  double floor = 1e-4;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Perturbations that moved a ReLU across its kink; finite differences are
  // not valid there and the entry is left out.
  std::size_t skipped_kinks = 0;
};

namespace detail {

using NetD = Mlp<double>;

// Loss = sum(weights .* output) plus the ReLU on/off pattern of the pass.
inline double probe(const NetD& net, const NetD::Matrix& x, const NetD::Matrix& weights,
                    std::vector<bool>* pattern) {
  NetD::Tape tape;
  const NetD::Matrix y = net.forward_batch(x, tape);
  if (pattern) {
    pattern->clear();
    for (std::size_t l = 1; l + 1 < tape.values.size(); ++l)
      for (Eigen::Index i = 0; i < tape.values[l].size(); ++i)
        pattern->push_back(tape.values[l].data()[i] > 0.0);
  }
  return (y.array() * weights.array()).sum();
}

inline double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace detail

/// Builds a random network of the given topology and compares analytic
/// parameter and input gradients with central differences.
inline GradCheckResult gradient_check_case(const std::vector<int>& topology, OutputActivation act,
                                           std::uint64_t seed, const GradCheckOptions& opt = {}) {
  using detail::NetD;
  SplitMix64 rng(seed);
  NetD net(topology, act, rng.next());
  NetD::Matrix x(topology.front(), opt.batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  NetD::Matrix w(topology.back(), opt.batch);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);

  NetD::Tape tape;
  net.forward_batch(x, tape);
  const NetD::Gradients g = net.backward(tape, w);
  std::vector<bool> base_pattern;
  detail::probe(net, x, w, &base_pattern);

  // Flat views of every parameter and its analytic gradient.
  std::vector<double*> params;
  std::vector<double> analytic;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      params.push_back(layer.weight.data() + i);
      analytic.push_back(g.layers[l].weight.data()[i]);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      params.push_back(layer.bias.data() + i);
      analytic.push_back(g.layers[l].bias.data()[i]);
    }
  }
  std::vector<std::size_t> pick(params.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  if (pick.size() > opt.max_params) {
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < opt.max_params; ++i)
      std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
    pick.resize(opt.max_params);
  }

  GradCheckResult r;
  std::vector<bool> pat;
  auto central = [&](double& slot, double& out) {
    const double saved = slot;
    slot = saved + opt.h;
    const double up = detail::probe(net, x, w, &pat);
    const bool kink_up = pat != base_pattern;
    slot = saved - opt.h;
    const double down = detail::probe(net, x, w, &pat);
    const bool kink_down = pat != base_pattern;
    slot = saved;
    out = (up - down) / (2.0 * opt.h);
    return !(kink_up || kink_down);
  };

  for (std::size_t k : pick) {
    double fd = 0.0;
    if (!central(*params[k], fd)) {
      ++r.skipped_kinks;
      continue;
    }
    r.max_rel_error = std::max(r.max_rel_error, detail::rel_error(analytic[k], fd, opt.floor));
    ++r.checked;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double fd = 0.0;
    if (!central(x.data()[i], fd)) {
      ++r.skipped_kinks;
      continue;
    }
    r.max_rel_error = std::max(r.max_rel_error, detail::rel_error(g.input_grad.data()[i], fd, opt.floor));
    ++r.checked;
  }
  return r;
}

struct TopologyCheck {
  std::string name;
  std::vector<int> topology;
  GradCheckResult result;
};

/// `layers` hidden layers of `width` units between a 40-wide input and a
/// 6-wide output, alternating tanh and identity heads across cases.
inline TopologyCheck gradient_check_topology(int layers, int width, int cases, std::uint64_t seed,
                                             const GradCheckOptions& opt = {}) {
  TopologyCheck tc;
  tc.name = std::to_string(layers) + "x" + std::to_string(width);
  tc.topology.push_back(40);
  for (int i = 0; i < layers; ++i) tc.topology.push_back(width);
  tc.topology.push_back(6);
  for (int c = 0; c < cases; ++c) {
    const auto act = c % 2 == 0 ? OutputActivation::kTanh : OutputActivation::kIdentity;
    const GradCheckResult r =
        gradient_check_case(tc.topology, act, derive_seed(seed, static_cast<std::uint64_t>(c)), opt);
    tc.result.max_rel_error = std::max(tc.result.max_rel_error, r.max_rel_error);
    tc.result.checked += r.checked;
    tc.result.skipped_kinks += r.skipped_kinks;
  }
  return tc;
}

}  // namespace pbrs

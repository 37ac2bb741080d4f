#pragma once

#include <functional>
#include <vector>

#include "shapednet/rng.hpp"
#include "shapednet/tensor.hpp"

namespace shapednet {

// Relative error with a small denominator floor so comparisons near zero do
// not blow up: |a-b| / max(|a|,|b|,1e-8).
double grad_rel_err(double a, double b);

// Central finite differences against the autodiff gradient, per coordinate.
//
// `f` must re-evaluate the objective from the params' current values and
// return it; callers typically wrap the loss in a NoGradGuard closure.
// `params` must already carry gradients from a backward() on the same
// objective. Returns the maximum relative error over every coordinate of
// every parameter tensor.
double grad_check(const std::function<double()>& f, std::vector<Tensor>& params,
                  double h);

// Cheaper probes for large parameter sets (the per-coordinate check costs
// 2·P evaluations of f, quadratic in network size).
//
// Directional probe: draws unit directions d over the concatenation of all
// parameter coordinates and compares d·grad against (f(θ+h·d)−f(θ−h·d))/(2h).
// Every coordinate participates in every direction. Returns the max relative
// error over `n_directions` seeded draws.
double grad_check_directional(const std::function<double()>& f,
                              std::vector<Tensor>& params, double h, Rng& rng,
                              int n_directions);

// Per-coordinate probe on a seeded subsample that covers every tensor with at
// least `per_tensor` coordinates (all of them for small tensors). Coordinates
// where both gradients are below `abs_floor` in magnitude count as agreeing
// when their difference is also below `abs_floor`; this keeps structurally
// zero gradients (e.g. unassigned detection slots) from tripping the relative
// test on finite-difference noise.
double grad_check_sampled(const std::function<double()>& f,
                          std::vector<Tensor>& params, double h, Rng& rng,
                          int per_tensor, double abs_floor);

// Same probe with a ladder of step sizes, scoring each coordinate by its best
// rung. A single step cannot serve every coordinate of a deep network: steep
// third derivatives (batch-norm channels with few elements) demand a small
// step to tame O(h^2) truncation, while coordinates with small gradients
// drown in evaluation roundoff that scales as O(1/h) and need a large one.
double grad_check_sampled(const std::function<double()>& f,
                          std::vector<Tensor>& params,
                          const std::vector<double>& step_ladder, Rng& rng,
                          int per_tensor, double abs_floor);

}  // namespace shapednet

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vsseg/nn/autograd.hpp"

namespace vsseg::nn {

// Per-axis triple in (Z, Y, X) tensor order.
using Axes3 = std::array<int64_t, 3>;

struct ConvGeometry {
  Axes3 stride{1, 1, 1};
  Axes3 padding{0, 0, 0};
};

// x: (N, Ci, Z, Y, X), weight: (Co, Ci, KZ, KY, KX), bias: (Co) or undefined.
// Zero padding.
Var conv3d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& geom);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var abs(const Var& x);
Var scale(const Var& x, double factor);
Var leaky_relu(const Var& x, double negative_slope);
Var relu(const Var& x);
Var tanh(const Var& x);
// atanh of x clamped to [-limit, limit].
Var atanh_clamped(const Var& x, double limit);
Var detach(const Var& x);

// Normalizes every (n, c) plane over its spatial extent; no affine terms.
Var instance_norm(const Var& x, double eps = 1e-5);
// Non-overlapping max pooling; every spatial axis must divide by its window.
Var max_pool(const Var& x, const Axes3& window);
Var upsample_nearest(const Var& x, const Axes3& factor);
// Softmax over the channel axis of an (N, C, ...) tensor.
Var softmax_channels(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
// mean |a - b|
Var mean_abs_error(const Var& a, const Var& b);
// mean (x - target)^2
Var mean_squared_to(const Var& x, double target);

// Rows of an (N, C, Z, Y, X) tensor at flat spatial positions of one batch
// item, giving (P, C).
Var gather_positions(const Var& x, int64_t batch_index, std::span<const int64_t> positions);
// x: (P, C), weight: (C, D), bias: (D) -> (P, D)
Var linear(const Var& x, const Var& weight, const Var& bias);
Var l2_normalize_rows(const Var& x, double eps = 1e-7);
// Mean over rows i of -log softmax_j(q_i . k_j / tau)[i]; q, k: (P, D).
Var patch_nce(const Var& q, const Var& k, double temperature);

// Mean soft-Dice loss over classes 1..C-1 plus voxel-wise cross-entropy.
// probs: (1, C, Z, Y, X) class probabilities, labels: Z*Y*X class indices.
Var soft_dice_cross_entropy(const Var& probs, std::span<const uint8_t> labels, double smooth = 1e-5);

}  // namespace vsseg::nn

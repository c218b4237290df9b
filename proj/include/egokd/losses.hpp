#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "egokd/errors.hpp"
#include "egokd/nn.hpp"
#include "egokd/tensor.hpp"

namespace egokd {

struct LossWeights {
  double w_ego = 0.1;
  double w_obj = 0.5;
  double w_int = 1.0;
};

struct TaskFlags {
  bool ego = false;
  bool obj = false;
  bool interaction = false;
};

// A task with weight zero behaves exactly like a disabled one: no forward,
// no gradient, no optimizer update for its head.
inline TaskFlags effective_tasks(const TaskFlags& flags, const LossWeights& w) {
  return TaskFlags{flags.ego && w.w_ego > 0, flags.obj && w.w_obj > 0,
                   flags.interaction && w.w_int > 0};
}

enum class IntLossForm { bce, literal };
enum class IntMapMode { both, hand_only, object_only };

struct LossReport {
  double l_act = 0, l_ego = 0, l_obj = 0, l_int = 0, l_total = 0;
};

// -log softmax(logits)[label]
template <typename T>
T loss_act(const std::vector<T>& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw DataError("loss_act: label out of range");
  std::vector<T> lp;
  log_softmax_vec(logits, lp);
  return -lp[label];
}

// dlogits += scale * (softmax(logits) - onehot(label))
template <typename T>
void loss_act_backward(const std::vector<T>& logits, int label, T scale,
                       std::vector<T>& dlogits) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw DataError("loss_act: label out of range");
  const auto p = softmax_vec(logits);
  dlogits.resize(logits.size(), T(0));
  for (size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] += scale * (p[i] - (static_cast<int>(i) == label ? T(1) : T(0)));
  }
}

// Soft-target cross entropy against a normalized target distribution;
// serves both the ego and the object distillation terms.
template <typename T>
T soft_target_loss(const std::vector<T>& logprobs, std::span<const T> target) {
  if (logprobs.size() != target.size())
    throw DataError("soft_target_loss: size mismatch");
  T loss = T(0);
  for (size_t i = 0; i < target.size(); ++i) loss -= target[i] * logprobs[i];
  return loss;
}

// dlogprobs += -scale * target
template <typename T>
void soft_target_loss_backward(std::span<const T> target, T scale, std::vector<T>& dlogprobs) {
  dlogprobs.resize(target.size(), T(0));
  for (size_t i = 0; i < target.size(); ++i) dlogprobs[i] -= scale * target[i];
}

namespace detail {

// log(1 + exp(x)) without overflow
template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Per-cell value of the interaction loss in the chosen form.
//   bce:     max(l,0) - l*y + log(1+exp(-|l|))
//   literal: y * log(1 + exp(-l))
template <typename T>
T int_cell_loss(T l, T y, IntLossForm form) {
  if (form == IntLossForm::literal) return y * softplus(-l);
  return std::max(l, T(0)) - l * y + std::log1p(std::exp(-std::abs(l)));
}

template <typename T>
T int_cell_grad(T l, T y, IntLossForm form) {
  if (form == IntLossForm::literal) return y * (sigmoid(l) - T(1));
  return sigmoid(l) - y;
}

template <typename T>
void check_map_target(std::span<const T> target) {
  for (T y : target) {
    if (!(y >= T(0) && y <= T(1))) throw DataError("interaction target outside [0,1]");
  }
}

}  // namespace detail

inline size_t int_cell_count(size_t map_cells, IntMapMode mode) {
  return (mode == IntMapMode::both ? 2 : 1) * map_cells;
}

// Mean over the included maps' cells. hand/object logits are the raw head
// outputs; the sigmoid lives inside the fused per-cell form.
template <typename T>
T loss_int(const Tensor<T>& hand_logits, const Tensor<T>& object_logits,
           std::span<const T> hand_target, std::span<const T> object_target,
           IntLossForm form = IntLossForm::bce, IntMapMode mode = IntMapMode::both) {
  T sum = T(0);
  size_t cells = 0;
  if (mode != IntMapMode::object_only) {
    if (hand_logits.numel() != hand_target.size())
      throw DataError("loss_int: hand map shape mismatch");
    detail::check_map_target(hand_target);
    for (size_t i = 0; i < hand_target.size(); ++i) {
      sum += detail::int_cell_loss(hand_logits.data[i], hand_target[i], form);
    }
    cells += hand_target.size();
  }
  if (mode != IntMapMode::hand_only) {
    if (object_logits.numel() != object_target.size())
      throw DataError("loss_int: object map shape mismatch");
    detail::check_map_target(object_target);
    for (size_t i = 0; i < object_target.size(); ++i) {
      sum += detail::int_cell_loss(object_logits.data[i], object_target[i], form);
    }
    cells += object_target.size();
  }
  if (cells == 0) throw DataError("loss_int: empty maps");
  return sum / static_cast<T>(cells);
}

template <typename T>
void loss_int_backward(const Tensor<T>& hand_logits, const Tensor<T>& object_logits,
                       std::span<const T> hand_target, std::span<const T> object_target,
                       T scale, Tensor<T>* d_hand, Tensor<T>* d_object,
                       IntLossForm form = IntLossForm::bce, IntMapMode mode = IntMapMode::both) {
  const size_t cells = int_cell_count(
      mode == IntMapMode::both ? hand_logits.numel()
      : mode == IntMapMode::hand_only ? hand_logits.numel() : object_logits.numel(),
      mode);
  const T s = scale / static_cast<T>(cells);
  if (mode != IntMapMode::object_only && d_hand) {
    if (!d_hand->same_shape(hand_logits)) *d_hand = Tensor<T>(hand_logits.shape);
    for (size_t i = 0; i < hand_target.size(); ++i) {
      d_hand->data[i] += s * detail::int_cell_grad(hand_logits.data[i], hand_target[i], form);
    }
  }
  if (mode != IntMapMode::hand_only && d_object) {
    if (!d_object->same_shape(object_logits)) *d_object = Tensor<T>(object_logits.shape);
    for (size_t i = 0; i < object_target.size(); ++i) {
      d_object->data[i] +=
          s * detail::int_cell_grad(object_logits.data[i], object_target[i], form);
    }
  }
}

// Combined objective. Components of disabled tasks are reported as exactly 0.
inline LossReport loss_total(double l_act, double l_ego, double l_obj, double l_int,
                             const LossWeights& w, const TaskFlags& flags) {
  LossReport r;
  const TaskFlags on = effective_tasks(flags, w);
  r.l_act = l_act;
  r.l_ego = on.ego ? l_ego : 0.0;
  r.l_obj = on.obj ? l_obj : 0.0;
  r.l_int = on.interaction ? l_int : 0.0;
  r.l_total = r.l_act + w.w_ego * r.l_ego + w.w_obj * r.l_obj + w.w_int * r.l_int;
  return r;
}

}  // namespace egokd

#pragma once

#include <cmath>
#include <vector>

#include "splatworld/common.hpp"
#include "splatworld/wm/action.hpp"

namespace splatworld {

struct LossWeights {
  double lambda_geo = 0.01;
  double lambda_sem = 0.0001;
  double lambda_dyna = 0.001;
  long warmup_iters = 3000;
};

inline void validate(const LossWeights& w) {
  if (w.lambda_geo < 0 || w.lambda_sem < 0 || w.lambda_dyna < 0)
    throw InvalidParameterError("loss weights must be non-negative");
  if (w.warmup_iters < 0) throw InvalidParameterError("warmup_iters must be non-negative");
}

// Mean squared error over all pixels and channels.
template <class S> S loss_geo(const std::vector<S>& pred, const std::vector<S>& gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw ShapeError("loss_geo: image size mismatch");
  S acc = S(0);
  for (size_t i = 0; i < pred.size(); ++i) {
    const S d = pred[i] - gt[i];
    acc += d * d;
  }
  return acc / S(pred.size());
}

// d loss_geo / d pred.
template <class S>
std::vector<S> loss_geo_backward(const std::vector<S>& pred, const std::vector<S>& gt,
                                 S upstream = S(1)) {
  if (pred.size() != gt.size() || pred.empty())
    throw ShapeError("loss_geo_backward: image size mismatch");
  std::vector<S> g(pred.size());
  const S scale = upstream * S(2) / S(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - gt[i]);
  return g;
}

// 1 minus the mean per-pixel cosine similarity of 3-channel features.
// Pixels where either vector has norm < 1e-8 contribute similarity 0.
template <class S> S loss_sem(const std::vector<S>& pred, const std::vector<S>& gt) {
  if (pred.size() != gt.size() || pred.empty() || pred.size() % 3 != 0)
    throw ShapeError("loss_sem: feature map size mismatch");
  const size_t n = pred.size() / 3;
  S acc = S(0);
  for (size_t p = 0; p < n; ++p) {
    Vec3<S> a(pred[3 * p], pred[3 * p + 1], pred[3 * p + 2]);
    Vec3<S> b(gt[3 * p], gt[3 * p + 1], gt[3 * p + 2]);
    const S na = a.norm(), nb = b.norm();
    if (na < S(1e-8) || nb < S(1e-8)) continue;
    acc += a.dot(b) / (na * nb);
  }
  return S(1) - acc / S(n);
}

template <class S>
std::vector<S> loss_sem_backward(const std::vector<S>& pred, const std::vector<S>& gt,
                                 S upstream = S(1)) {
  if (pred.size() != gt.size() || pred.empty() || pred.size() % 3 != 0)
    throw ShapeError("loss_sem_backward: feature map size mismatch");
  const size_t n = pred.size() / 3;
  std::vector<S> g(pred.size(), S(0));
  const S scale = -upstream / S(n);
  for (size_t p = 0; p < n; ++p) {
    Vec3<S> a(pred[3 * p], pred[3 * p + 1], pred[3 * p + 2]);
    Vec3<S> b(gt[3 * p], gt[3 * p + 1], gt[3 * p + 2]);
    const S na = a.norm(), nb = b.norm();
    if (na < S(1e-8) || nb < S(1e-8)) continue;
    const S sim = a.dot(b) / (na * nb);
    Vec3<S> dsim = b / (na * nb) - sim * a / (na * na);
    for (int c = 0; c < 3; ++c) g[3 * p + c] = scale * dsim[c];
  }
  return g;
}

namespace detail {

template <class S> S log_softmax_nll(const Eigen::Ref<const VecX<S>>& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw InvalidParameterError("cross entropy: label index out of range");
  const S mx = logits.maxCoeff();
  S lse = S(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) lse += std::exp(logits[i] - mx);
  return std::log(lse) + mx - logits[label];
}

// softmax - onehot, scaled.
template <class S>
void softmax_grad(const Eigen::Ref<const VecX<S>>& logits, int label, S upstream,
                  Eigen::Ref<VecX<S>> out) {
  const S mx = logits.maxCoeff();
  S lse = S(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) lse += std::exp(logits[i] - mx);
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    out[i] += upstream * std::exp(logits[i] - mx) / lse;
  out[label] -= upstream;
}

}  // namespace detail

// Sum of cross-entropies of the six classification heads (translation,
// three rotation axes, openness, collision).
template <class S> S loss_act(const ActionLogits<S>& logits, const DiscreteAction& expert) {
  validate(expert, int(logits.translation.size()), int(logits.rotation.rows()));
  S acc = detail::log_softmax_nll<S>(logits.translation, expert.translation_bin);
  for (int axis = 0; axis < 3; ++axis)
    acc += detail::log_softmax_nll<S>(logits.rotation.col(axis), expert.rotation_bins[axis]);
  acc += detail::log_softmax_nll<S>(logits.openness, expert.openness);
  acc += detail::log_softmax_nll<S>(logits.collision, expert.collision);
  return acc;
}

template <class S>
ActionLogits<S> loss_act_backward(const ActionLogits<S>& logits, const DiscreteAction& expert,
                                  S upstream = S(1)) {
  validate(expert, int(logits.translation.size()), int(logits.rotation.rows()));
  ActionLogits<S> g;
  g.translation = VecX<S>::Zero(logits.translation.size());
  g.rotation = MatX<S>::Zero(logits.rotation.rows(), 3);
  detail::softmax_grad<S>(logits.translation, expert.translation_bin, upstream, g.translation);
  for (int axis = 0; axis < 3; ++axis) {
    VecX<S> col = VecX<S>::Zero(logits.rotation.rows());
    detail::softmax_grad<S>(logits.rotation.col(axis), expert.rotation_bins[axis], upstream, col);
    g.rotation.col(axis) = col;
  }
  VecX<S> two = VecX<S>::Zero(2);
  detail::softmax_grad<S>(VecX<S>(logits.openness), expert.openness, upstream, two);
  g.openness = two;
  two.setZero();
  detail::softmax_grad<S>(VecX<S>(logits.collision), expert.collision, upstream, two);
  g.collision = two;
  return g;
}

// Future-frame consistency: same contract as loss_geo on the t+1 frame.
template <class S> S loss_dyna(const std::vector<S>& pred_future, const std::vector<S>& gt_future) {
  return loss_geo(pred_future, gt_future);
}

template <class S> struct LossReport {
  S act = S(0), geo = S(0), sem = S(0), dyna = S(0);
  S total = S(0);
  bool dyna_in_graph = true;  // false during warm-up
};

// L = L_Act + lg * L_Geo + ls * L_Sem + ld * L_Dyna. During warm-up the
// dynamics term is still reported but flagged out of the gradient path.
template <class S>
LossReport<S> total_loss(S act, S geo, S sem, S dyna, const LossWeights& w, long iteration) {
  validate(w);
  if (iteration < 0) throw InvalidParameterError("total_loss: iteration must be >= 0");
  LossReport<S> r;
  r.act = act;
  r.geo = geo;
  r.sem = sem;
  r.dyna = dyna;
  r.dyna_in_graph = iteration >= w.warmup_iters;
  r.total = act + S(w.lambda_geo) * geo + S(w.lambda_sem) * sem + S(w.lambda_dyna) * dyna;
  return r;
}

template <class S> S psnr(const std::vector<S>& pred, const std::vector<S>& gt) {
  const S mse = loss_geo(pred, gt);
  if (mse <= S(0)) return S(99);
  return S(10) * std::log10(S(1) / mse);
}

}  // namespace splatworld

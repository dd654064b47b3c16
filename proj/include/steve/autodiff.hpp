#pragma once

// Minimal reverse-mode autodiff over dense Eigen matrices. A batch of
// node-level features lives in one [B*N, c] matrix; time is a vector of
// such variables. Templated on the scalar so float32/float64 runs share
// one code path.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <unordered_set>
#include <vector>

#include "steve/errors.hpp"

namespace steve::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
struct Node;

template <class S>
using Var = std::shared_ptr<Node<S>>;

template <class S>
struct Node {
  Mat<S> value;
  Mat<S> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::int64_t id = 0;
  std::vector<Var<S>> parents;
  std::function<void(Node<S>&)> backward_fn;

  void accumulate(const Mat<S>& g) {
    if (grad.size() == 0) grad = Mat<S>::Zero(value.rows(), value.cols());
    grad += g;
  }
  void zero_grad() { grad.resize(0, 0); }
};

namespace detail {
inline std::int64_t next_id() {
  static std::int64_t counter = 0;
  return ++counter;
}
}  // namespace detail

template <class S>
Var<S> make_node(Mat<S> value, bool requires_grad, std::vector<Var<S>> parents = {},
                 std::function<void(Node<S>&)> backward = {}) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = detail::next_id();
  n->parents = std::move(parents);
  n->backward_fn = std::move(backward);
  return n;
}

template <class S>
Var<S> constant(Mat<S> value) {
  return make_node<S>(std::move(value), false);
}

template <class S>
Var<S> parameter(Mat<S> value) {
  return make_node<S>(std::move(value), true);
}

template <class S>
Var<S> detach(const Var<S>& a) {
  return constant<S>(a->value);
}

template <class S>
bool any_grad(const std::vector<Var<S>>& vars) {
  for (const auto& v : vars)
    if (v->requires_grad) return true;
  return false;
}

// Runs reverse accumulation from a scalar [1,1] root.
template <class S>
void backward(const Var<S>& root) {
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw ShapeError("backward: root must be a 1x1 scalar");
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<Node<S>*> stack{root.get()};
  while (!stack.empty()) {
    Node<S>* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](Node<S>* a, Node<S>* b) { return a->id > b->id; });
  root->accumulate(Mat<S>::Ones(1, 1));
  for (Node<S>* n : order)
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
}

// ---- elementwise and linear ops ----

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw ShapeError("add: shape mismatch");
  return make_node<S>(a->value + b->value, a->requires_grad || b->requires_grad,
                      {a, b}, [a, b](Node<S>& n) {
                        if (a->requires_grad) a->accumulate(n.grad);
                        if (b->requires_grad) b->accumulate(n.grad);
                      });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw ShapeError("sub: shape mismatch");
  return make_node<S>(a->value - b->value, a->requires_grad || b->requires_grad,
                      {a, b}, [a, b](Node<S>& n) {
                        if (a->requires_grad) a->accumulate(n.grad);
                        if (b->requires_grad) b->accumulate(-n.grad);
                      });
}

template <class S>
Var<S> scale(const Var<S>& a, S c) {
  return make_node<S>(a->value * c, a->requires_grad, {a}, [a, c](Node<S>& n) {
    if (a->requires_grad) a->accumulate(n.grad * c);
  });
}

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a->value.cols() != b->value.rows()) throw ShapeError("matmul: inner dims");
  return make_node<S>(a->value * b->value, a->requires_grad || b->requires_grad,
                      {a, b}, [a, b](Node<S>& n) {
                        if (a->requires_grad)
                          a->accumulate(n.grad * b->value.transpose());
                        if (b->requires_grad)
                          b->accumulate(a->value.transpose() * n.grad);
                      });
}

template <class S>
Var<S> hadamard(const Var<S>& a, const Var<S>& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw ShapeError("hadamard: shape mismatch");
  return make_node<S>(a->value.cwiseProduct(b->value),
                      a->requires_grad || b->requires_grad, {a, b},
                      [a, b](Node<S>& n) {
                        if (a->requires_grad)
                          a->accumulate(n.grad.cwiseProduct(b->value));
                        if (b->requires_grad)
                          b->accumulate(n.grad.cwiseProduct(a->value));
                      });
}

// Broadcast a [1,c] bias row across all rows.
template <class S>
Var<S> add_bias(const Var<S>& a, const Var<S>& bias) {
  if (bias->value.rows() != 1 || bias->value.cols() != a->value.cols())
    throw ShapeError("add_bias: bias must be [1, cols]");
  Mat<S> v = a->value;
  v.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(bias->value.row(0));
  return make_node<S>(std::move(v), a->requires_grad || bias->requires_grad,
                      {a, bias}, [a, bias](Node<S>& n) {
                        if (a->requires_grad) a->accumulate(n.grad);
                        if (bias->requires_grad)
                          bias->accumulate(n.grad.colwise().sum());
                      });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  Mat<S> v = a->value.unaryExpr([](S x) { return S(1) / (S(1) + std::exp(-x)); });
  return make_node<S>(v, a->requires_grad, {a}, [a, v](Node<S>& n) {
    if (a->requires_grad)
      a->accumulate(n.grad.cwiseProduct(v.cwiseProduct((Mat<S>::Ones(v.rows(), v.cols()) - v))));
  });
}

template <class S>
Var<S> tanh_act(const Var<S>& a) {
  Mat<S> v = a->value.array().tanh().matrix();
  return make_node<S>(v, a->requires_grad, {a}, [a, v](Node<S>& n) {
    if (a->requires_grad)
      a->accumulate(n.grad.cwiseProduct(
          (Mat<S>::Ones(v.rows(), v.cols()) - v.cwiseProduct(v))));
  });
}

// Pass-through inside [lo, hi], zero gradient where clamped.
template <class S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  Mat<S> v = a->value.cwiseMax(lo).cwiseMin(hi);
  Mat<S> mask = ((a->value.array() >= lo) && (a->value.array() <= hi))
                    .template cast<S>()
                    .matrix();
  return make_node<S>(v, a->requires_grad, {a}, [a, mask](Node<S>& n) {
    if (a->requires_grad) a->accumulate(n.grad.cwiseProduct(mask));
  });
}

template <class S>
Var<S> cols(const Var<S>& a, int start, int count) {
  if (start < 0 || start + count > a->value.cols()) throw ShapeError("cols: range");
  Mat<S> v = a->value.middleCols(start, count);
  return make_node<S>(std::move(v), a->requires_grad, {a},
                      [a, start, count](Node<S>& n) {
                        if (!a->requires_grad) return;
                        Mat<S> g = Mat<S>::Zero(a->value.rows(), a->value.cols());
                        g.middleCols(start, count) = n.grad;
                        a->accumulate(g);
                      });
}

template <class S>
Var<S> concat_cols(const Var<S>& a, const Var<S>& b) {
  if (a->value.rows() != b->value.rows()) throw ShapeError("concat_cols: rows");
  Mat<S> v(a->value.rows(), a->value.cols() + b->value.cols());
  v << a->value, b->value;
  const int ca = static_cast<int>(a->value.cols());
  return make_node<S>(std::move(v), a->requires_grad || b->requires_grad, {a, b},
                      [a, b, ca](Node<S>& n) {
                        if (a->requires_grad) a->accumulate(n.grad.leftCols(ca));
                        if (b->requires_grad)
                          b->accumulate(n.grad.rightCols(n.grad.cols() - ca));
                      });
}

// Gated linear unit over the column axis: first half gated by sigmoid of
// the second half.
template <class S>
Var<S> glu(const Var<S>& a) {
  const int c = static_cast<int>(a->value.cols());
  if (c % 2 != 0) throw ShapeError("glu: odd channel count");
  return hadamard(cols(a, 0, c / 2), sigmoid(cols(a, c / 2, c / 2)));
}

// ---- batched graph / segment ops (B samples of N rows each) ----

// Applies a fixed [N,N] propagation matrix to each sample block.
template <class S>
Var<S> graph_propagate(const Var<S>& a, const Mat<S>& prop) {
  const int n = static_cast<int>(prop.rows());
  if (prop.cols() != n || a->value.rows() % n != 0)
    throw ShapeError("graph_propagate: rows not a multiple of N");
  const int batches = static_cast<int>(a->value.rows()) / n;
  Mat<S> v(a->value.rows(), a->value.cols());
  for (int b = 0; b < batches; ++b)
    v.middleRows(b * n, n) = prop * a->value.middleRows(b * n, n);
  return make_node<S>(std::move(v), a->requires_grad, {a},
                      [a, prop, n, batches](Node<S>& nd) {
                        if (!a->requires_grad) return;
                        Mat<S> g(nd.grad.rows(), nd.grad.cols());
                        for (int b = 0; b < batches; ++b)
                          g.middleRows(b * n, n) =
                              prop.transpose() * nd.grad.middleRows(b * n, n);
                        a->accumulate(g);
                      });
}

// [B*N, c] -> [B, c], mean over each sample's N rows.
template <class S>
Var<S> segment_mean(const Var<S>& a, int n) {
  if (a->value.rows() % n != 0) throw ShapeError("segment_mean: rows");
  const int batches = static_cast<int>(a->value.rows()) / n;
  Mat<S> v(batches, a->value.cols());
  for (int b = 0; b < batches; ++b)
    v.row(b) = a->value.middleRows(b * n, n).colwise().mean();
  return make_node<S>(std::move(v), a->requires_grad, {a},
                      [a, n, batches](Node<S>& nd) {
                        if (!a->requires_grad) return;
                        Mat<S> g(a->value.rows(), a->value.cols());
                        for (int b = 0; b < batches; ++b)
                          g.middleRows(b * n, n) =
                              (nd.grad.row(b) / S(n)).replicate(n, 1);
                        a->accumulate(g);
                      });
}

// Scales each sample block of h [B*N, c] by the per-sample scalar alpha [B, 1].
template <class S>
Var<S> scale_rows_block(const Var<S>& h, const Var<S>& alpha, int n) {
  if (alpha->value.cols() != 1 || h->value.rows() != alpha->value.rows() * n)
    throw ShapeError("scale_rows_block: shape mismatch");
  const int batches = static_cast<int>(alpha->value.rows());
  Mat<S> v(h->value.rows(), h->value.cols());
  for (int b = 0; b < batches; ++b)
    v.middleRows(b * n, n) = h->value.middleRows(b * n, n) * alpha->value(b, 0);
  return make_node<S>(
      std::move(v), h->requires_grad || alpha->requires_grad, {h, alpha},
      [h, alpha, n, batches](Node<S>& nd) {
        if (h->requires_grad) {
          Mat<S> g(nd.grad.rows(), nd.grad.cols());
          for (int b = 0; b < batches; ++b)
            g.middleRows(b * n, n) = nd.grad.middleRows(b * n, n) * alpha->value(b, 0);
          h->accumulate(g);
        }
        if (alpha->requires_grad) {
          Mat<S> g = Mat<S>::Zero(batches, 1);
          for (int b = 0; b < batches; ++b)
            g(b, 0) = (nd.grad.middleRows(b * n, n)
                           .cwiseProduct(h->value.middleRows(b * n, n)))
                          .sum();
          alpha->accumulate(g);
        }
      });
}

// ---- reductions and losses ----

template <class S>
Var<S> mean_all(const Var<S>& a) {
  Mat<S> v(1, 1);
  v(0, 0) = a->value.mean();
  const S inv = S(1) / S(a->value.size());
  return make_node<S>(std::move(v), a->requires_grad, {a}, [a, inv](Node<S>& n) {
    if (a->requires_grad)
      a->accumulate(Mat<S>::Constant(a->value.rows(), a->value.cols(),
                                     n.grad(0, 0) * inv));
  });
}

template <class S>
Var<S> trace_mean(const Var<S>& a) {
  if (a->value.rows() != a->value.cols()) throw ShapeError("trace_mean: square");
  Mat<S> v(1, 1);
  v(0, 0) = a->value.trace() / S(a->value.rows());
  const S inv = S(1) / S(a->value.rows());
  return make_node<S>(std::move(v), a->requires_grad, {a}, [a, inv](Node<S>& n) {
    if (!a->requires_grad) return;
    Mat<S> g = Mat<S>::Zero(a->value.rows(), a->value.cols());
    g.diagonal().setConstant(n.grad(0, 0) * inv);
    a->accumulate(g);
  });
}

// Mean over rows of the cross entropy between row-softmax(logits) and the
// integer class label of each row.
template <class S>
Var<S> softmax_cross_entropy(const Var<S>& logits, const std::vector<int>& labels) {
  const int rows = static_cast<int>(logits->value.rows());
  const int classes = static_cast<int>(logits->value.cols());
  if (static_cast<int>(labels.size()) != rows)
    throw ShapeError("softmax_cross_entropy: label count");
  Mat<S> probs(rows, classes);
  S loss = 0;
  for (int r = 0; r < rows; ++r) {
    if (labels[r] < 0 || labels[r] >= classes)
      throw LabelError("softmax_cross_entropy: label out of range");
    S mx = logits->value.row(r).maxCoeff();
    Eigen::Matrix<S, 1, Eigen::Dynamic> e =
        (logits->value.row(r).array() - mx).exp().matrix();
    S z = e.sum();
    probs.row(r) = e / z;
    loss -= std::log(probs(r, labels[r]));
  }
  Mat<S> v(1, 1);
  v(0, 0) = loss / S(rows);
  return make_node<S>(std::move(v), logits->requires_grad, {logits},
                      [logits, probs, labels, rows](Node<S>& n) {
                        if (!logits->requires_grad) return;
                        Mat<S> g = probs;
                        for (int r = 0; r < rows; ++r) g(r, labels[r]) -= S(1);
                        logits->accumulate(g * (n.grad(0, 0) / S(rows)));
                      });
}

// Sum of squared differences divided by the number of rows (per-row squared
// norm, averaged over rows).
template <class S>
Var<S> squared_error_rowmean(const Var<S>& pred, const Mat<S>& target) {
  if (pred->value.rows() != target.rows() || pred->value.cols() != target.cols())
    throw ShapeError("squared_error_rowmean: shape mismatch");
  Mat<S> diff = pred->value - target;
  Mat<S> v(1, 1);
  v(0, 0) = diff.squaredNorm() / S(target.rows());
  return make_node<S>(std::move(v), pred->requires_grad, {pred},
                      [pred, diff](Node<S>& n) {
                        if (pred->requires_grad)
                          pred->accumulate(diff * (S(2) * n.grad(0, 0) / S(diff.rows())));
                      });
}

// Mean absolute error over all entries.
template <class S>
Var<S> l1_mean(const Var<S>& pred, const Mat<S>& target) {
  if (pred->value.rows() != target.rows() || pred->value.cols() != target.cols())
    throw ShapeError("l1_mean: shape mismatch");
  Mat<S> diff = pred->value - target;
  Mat<S> v(1, 1);
  v(0, 0) = diff.cwiseAbs().mean();
  const S inv = S(1) / S(diff.size());
  return make_node<S>(std::move(v), pred->requires_grad, {pred},
                      [pred, diff, inv](Node<S>& n) {
                        if (!pred->requires_grad) return;
                        Mat<S> sign = diff.unaryExpr(
                            [](S x) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
                        pred->accumulate(sign * (n.grad(0, 0) * inv));
                      });
}

// Row-wise softmax kept as a matrix (used for the context priors).
template <class S>
Var<S> row_softmax(const Var<S>& logits) {
  Mat<S> v(logits->value.rows(), logits->value.cols());
  for (int r = 0; r < logits->value.rows(); ++r) {
    S mx = logits->value.row(r).maxCoeff();
    Eigen::Matrix<S, 1, Eigen::Dynamic> e =
        (logits->value.row(r).array() - mx).exp().matrix();
    v.row(r) = e / e.sum();
  }
  return make_node<S>(v, logits->requires_grad, {logits}, [logits, v](Node<S>& n) {
    if (!logits->requires_grad) return;
    Mat<S> g(v.rows(), v.cols());
    for (int r = 0; r < v.rows(); ++r) {
      S dot = n.grad.row(r).dot(v.row(r));
      g.row(r) = v.row(r).cwiseProduct(
          (n.grad.row(r).array() - dot).matrix());
    }
    logits->accumulate(g);
  });
}

// Gradient reversal: identity forward, upstream gradient times -eta backward.
template <class S>
Var<S> grl(const Var<S>& a, S eta = S(1)) {
  return make_node<S>(Mat<S>(a->value), a->requires_grad, {a}, [a, eta](Node<S>& n) {
    if (a->requires_grad) a->accumulate(n.grad * (-eta));
  });
}

// L(j,i) = log N(z_j | mu_i, diag exp(lv_i)): pairwise Gaussian log density
// matrix for the vCLUB estimator.
template <class S>
Var<S> pairwise_gauss_logq(const Var<S>& z, const Var<S>& mu, const Var<S>& lv) {
  const int m = static_cast<int>(z->value.rows());
  const int d = static_cast<int>(z->value.cols());
  if (mu->value.rows() != m || mu->value.cols() != d || lv->value.rows() != m ||
      lv->value.cols() != d)
    throw ShapeError("pairwise_gauss_logq: shape mismatch");
  const S log2pi = std::log(S(2) * S(M_PI));
  Mat<S> v(m, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      S acc = 0;
      for (int k = 0; k < d; ++k) {
        S e = z->value(j, k) - mu->value(i, k);
        acc += e * e * std::exp(-lv->value(i, k)) + lv->value(i, k) + log2pi;
      }
      v(j, i) = S(-0.5) * acc;
    }
  return make_node<S>(
      std::move(v), z->requires_grad || mu->requires_grad || lv->requires_grad,
      {z, mu, lv}, [z, mu, lv, m, d](Node<S>& n) {
        Mat<S> gz = Mat<S>::Zero(m, d), gmu = Mat<S>::Zero(m, d),
               glv = Mat<S>::Zero(m, d);
        for (int j = 0; j < m; ++j)
          for (int i = 0; i < m; ++i) {
            const S g = n.grad(j, i);
            if (g == S(0)) continue;
            for (int k = 0; k < d; ++k) {
              S iv = std::exp(-lv->value(i, k));
              S e = z->value(j, k) - mu->value(i, k);
              gz(j, k) += g * (-e * iv);
              gmu(i, k) += g * (e * iv);
              glv(i, k) += g * (S(-0.5) * (S(1) - e * e * iv));
            }
          }
        if (z->requires_grad) z->accumulate(gz);
        if (mu->requires_grad) mu->accumulate(gmu);
        if (lv->requires_grad) lv->accumulate(glv);
      });
}

// ---- parameters, init, optimizer ----

template <class S>
Mat<S> uniform_init(int rows, int cols, int fan_in, std::mt19937_64& rng,
                    double gain = 1.0) {
  const S bound = S(gain) / std::sqrt(S(std::max(1, fan_in)));
  std::uniform_real_distribution<double> dist(-double(bound), double(bound));
  Mat<S> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = S(dist(rng));
  return m;
}

template <class S>
struct NamedParam {
  std::string name;
  Var<S> var;
};

template <class S>
class Adam {
 public:
  Adam(std::vector<Var<S>> params, S lr, S beta1 = S(0.9), S beta2 = S(0.999),
       S eps = S(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, S(t_));
    const S bc2 = S(1) - std::pow(beta2_, S(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      if (p.grad.size() == 0) continue;
      m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (S(1) - beta2_) * p.grad.cwiseProduct(p.grad);
      Mat<S> mhat = m_[i] / bc1;
      Mat<S> vhat = v_[i] / bc2;
      p.value -= lr_ * mhat.cwiseQuotient(
                           (vhat.cwiseSqrt().array() + eps_).matrix());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void set_lr(S lr) { lr_ = lr; }
  S lr() const { return lr_; }

 private:
  std::vector<Var<S>> params_;
  S lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace steve::nn

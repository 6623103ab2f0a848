#include "sparsediff/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sparsediff::ad {

namespace {

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_str(a->value.shape()) + " vs " +
                                Tensor::shape_str(b->value.shape()));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return n;
}

Var param(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  // Iterative post-order DFS for topological order.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.vec()[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->requires_grad) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const auto& p : params) {
    p->ensure_grad();
    p->grad.vec().setZero();
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape(), Eigen::VectorXd(a->value.vec() + b->value.vec()));
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad.vec() += n.grad.vec(); }
    if (b->requires_grad) { b->ensure_grad(); b->grad.vec() += n.grad.vec(); }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape(), Eigen::VectorXd(a->value.vec() - b->value.vec()));
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad.vec() += n.grad.vec(); }
    if (b->requires_grad) { b->ensure_grad(); b->grad.vec() -= n.grad.vec(); }
  });
}

Var cmul(const Var& a, const Var& b) {
  check_same_shape(a, b, "cmul");
  Tensor out(a->value.shape(),
             Eigen::VectorXd(a->value.vec().cwiseProduct(b->value.vec())));
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.vec() += n.grad.vec().cwiseProduct(b->value.vec());
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.vec() += n.grad.vec().cwiseProduct(a->value.vec());
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a->value.shape(), Eigen::VectorXd(a->value.vec() * s));
  return make_node(std::move(out), {a}, [a, s](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad.vec() += s * n.grad.vec(); }
  });
}

Var scale_by(const Var& a, const Var& s) {
  if (s->value.numel() != 1) throw std::invalid_argument("scale_by: s must be scalar");
  double sv = s->value[0];
  Tensor out(a->value.shape(), Eigen::VectorXd(a->value.vec() * sv));
  return make_node(std::move(out), {a, s}, [a, s, sv](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad.vec() += sv * n.grad.vec(); }
    if (s->requires_grad) {
      s->ensure_grad();
      s->grad.vec()[0] += n.grad.vec().dot(a->value.vec());
    }
  });
}

Var tanh_(const Var& a) {
  Tensor out(a->value.shape(), Eigen::VectorXd(a->value.vec().array().tanh()));
  Eigen::VectorXd y = out.vec();
  return make_node(std::move(out), {a}, [a, y](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.vec().array() += n.grad.vec().array() * (1.0 - y.array().square());
  });
}

Var silu(const Var& a) {
  const auto& x = a->value.vec();
  Eigen::VectorXd sig(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) sig[i] = sigmoid(x[i]);
  Tensor out(a->value.shape(), Eigen::VectorXd(x.cwiseProduct(sig)));
  return make_node(std::move(out), {a}, [a, sig](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const auto& x = a->value.vec().array();
    auto s = sig.array();
    a->grad.vec().array() += n.grad.vec().array() * (s * (1.0 + x * (1.0 - s)));
  });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
  if (Tensor::numel_of(shape) != a->value.numel())
    throw std::invalid_argument("reshape: numel mismatch");
  Tensor out(std::move(shape), a->value.vec());
  return make_node(std::move(out), {a}, [a](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad.vec() += n.grad.vec(); }
  });
}

Var detach(const Var& a) { return constant(a->value); }

Var dropout(const Var& a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  Eigen::VectorXd mask(a->value.numel());
  double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out(a->value.shape(), Eigen::VectorXd(a->value.vec().cwiseProduct(mask)));
  return make_node(std::move(out), {a}, [a, mask](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.vec() += n.grad.vec().cwiseProduct(mask);
  });
}

Var sum(const Var& a) {
  Tensor out = Tensor::scalar(a->value.vec().sum());
  return make_node(std::move(out), {a}, [a](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.vec().array() += n.grad.vec()[0];
  });
}

Var mean(const Var& a) {
  double inv = 1.0 / static_cast<double>(a->value.numel());
  Tensor out = Tensor::scalar(a->value.vec().mean());
  return make_node(std::move(out), {a}, [a, inv](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.vec().array() += n.grad.vec()[0] * inv;
  });
}

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  Eigen::VectorXd diff = a->value.vec() - b->value.vec();
  double inv = 1.0 / static_cast<double>(diff.size());
  Tensor out = Tensor::scalar(diff.squaredNorm() * inv);
  return make_node(std::move(out), {a, b}, [a, b, diff, inv](Node& n) {
    double g = 2.0 * inv * n.grad.vec()[0];
    if (a->requires_grad) { a->ensure_grad(); a->grad.vec() += g * diff; }
    if (b->requires_grad) { b->ensure_grad(); b->grad.vec() -= g * diff; }
  });
}

Var sum_sq(const Var& a) {
  Tensor out = Tensor::scalar(a->value.vec().squaredNorm());
  return make_node(std::move(out), {a}, [a](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.vec() += 2.0 * n.grad.vec()[0] * a->value.vec();
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
    throw std::invalid_argument("matmul: bad shapes " +
                                Tensor::shape_str(a->value.shape()) + " x " +
                                Tensor::shape_str(b->value.shape()));
  int64_t m = a->value.dim(0), k = a->value.dim(1), p = b->value.dim(1);
  Tensor out({m, p});
  out.mat(m, p) = a->value.mat(m, k) * b->value.mat(k, p);
  return make_node(std::move(out), {a, b}, [a, b, m, k, p](Node& n) {
    auto g = n.grad.mat(m, p);
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.mat(m, k) += g * b->value.mat(k, p).transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.mat(k, p) += a->value.mat(m, k).transpose() * g;
    }
  });
}

Var transpose(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("transpose: 2-d only");
  int64_t m = a->value.dim(0), k = a->value.dim(1);
  Tensor out({k, m});
  out.mat(k, m) = a->value.mat(m, k).transpose();
  return make_node(std::move(out), {a}, [a, m, k](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.mat(m, k) += n.grad.mat(k, m).transpose();
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->value.rank() != 2 || w->value.rank() != 2 ||
      x->value.dim(1) != w->value.dim(0) || b->value.numel() != w->value.dim(1))
    throw std::invalid_argument("linear: bad shapes");
  int64_t bs = x->value.dim(0), in = x->value.dim(1), outd = w->value.dim(1);
  Tensor out({bs, outd});
  out.mat(bs, outd) = (x->value.mat(bs, in) * w->value.mat(in, outd)).rowwise() +
                      b->value.vec().transpose();
  return make_node(std::move(out), {x, w, b}, [x, w, b, bs, in, outd](Node& n) {
    auto g = n.grad.mat(bs, outd);
    if (x->requires_grad) {
      x->ensure_grad();
      x->grad.mat(bs, in) += g * w->value.mat(in, outd).transpose();
    }
    if (w->requires_grad) {
      w->ensure_grad();
      w->grad.mat(in, outd) += x->value.mat(bs, in).transpose() * g;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.vec() += g.colwise().sum().transpose();
    }
  });
}

Var softmax_rows(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("softmax_rows: 2-d only");
  int64_t r = a->value.dim(0), c = a->value.dim(1);
  Tensor out({r, c});
  auto X = a->value.mat(r, c);
  auto Y = out.mat(r, c);
  for (int64_t i = 0; i < r; ++i) {
    double mx = X.row(i).maxCoeff();
    Y.row(i) = (X.row(i).array() - mx).exp();
    Y.row(i) /= Y.row(i).sum();
  }
  Tensor yv = out;
  return make_node(std::move(out), {a}, [a, yv, r, c](Node& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    auto Y = yv.mat(r, c);
    auto G = n.grad.mat(r, c);
    auto GA = a->grad.mat(r, c);
    for (int64_t i = 0; i < r; ++i) {
      double dot = G.row(i).dot(Y.row(i));
      GA.row(i) += (Y.row(i).array() * (G.row(i).array() - dot)).matrix();
    }
  });
}

Var gather_rows(const Var& table, std::vector<int32_t> idx) {
  if (table->value.rank() != 2) throw std::invalid_argument("gather_rows: 2-d table");
  int64_t k = table->value.dim(0), d = table->value.dim(1);
  int64_t n = static_cast<int64_t>(idx.size());
  Tensor out({n, d});
  auto T = table->value.mat(k, d);
  auto O = out.mat(n, d);
  for (int64_t i = 0; i < n; ++i) {
    int32_t r = idx[static_cast<size_t>(i)];
    if (r < 0 || r >= k) throw std::out_of_range("gather_rows: index out of range");
    O.row(i) = T.row(r);
  }
  return make_node(std::move(out), {table}, [table, idx = std::move(idx), k, d, n](Node& nd) {
    if (!table->requires_grad) return;
    table->ensure_grad();
    auto G = nd.grad.mat(n, d);
    auto GT = table->grad.mat(k, d);
    for (int64_t i = 0; i < n; ++i) GT.row(idx[static_cast<size_t>(i)]) += G.row(i);
  });
}

// ---------------------------------------------------------------- conv2d ----

namespace {

// col has shape (Ho*Wo, C*kh*kw), row-major.
void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t kh,
            int64_t kw, int64_t pad, int64_t Ho, int64_t Wo, double* col) {
  for (int64_t oi = 0; oi < Ho; ++oi)
    for (int64_t oj = 0; oj < Wo; ++oj) {
      double* row = col + (oi * Wo + oj) * (C * kh * kw);
      for (int64_t c = 0; c < C; ++c)
        for (int64_t ki = 0; ki < kh; ++ki) {
          int64_t ii = oi + ki - pad;
          for (int64_t kj = 0; kj < kw; ++kj) {
            int64_t jj = oj + kj - pad;
            row[(c * kh + ki) * kw + kj] =
                (ii >= 0 && ii < H && jj >= 0 && jj < W)
                    ? x[(c * H + ii) * W + jj]
                    : 0.0;
          }
        }
    }
}

void col2im_accum(const double* col, int64_t C, int64_t H, int64_t W, int64_t kh,
                  int64_t kw, int64_t pad, int64_t Ho, int64_t Wo, double* x) {
  for (int64_t oi = 0; oi < Ho; ++oi)
    for (int64_t oj = 0; oj < Wo; ++oj) {
      const double* row = col + (oi * Wo + oj) * (C * kh * kw);
      for (int64_t c = 0; c < C; ++c)
        for (int64_t ki = 0; ki < kh; ++ki) {
          int64_t ii = oi + ki - pad;
          if (ii < 0 || ii >= H) continue;
          for (int64_t kj = 0; kj < kw; ++kj) {
            int64_t jj = oj + kj - pad;
            if (jj < 0 || jj >= W) continue;
            x[(c * H + ii) * W + jj] += row[(c * kh + ki) * kw + kj];
          }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int pad) {
  if (x->value.rank() != 4 || w->value.rank() != 4)
    throw std::invalid_argument("conv2d: x and w must be 4-d");
  int64_t B = x->value.dim(0), Ci = x->value.dim(1), H = x->value.dim(2),
          W = x->value.dim(3);
  int64_t Co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != Ci || b->value.numel() != Co)
    throw std::invalid_argument("conv2d: channel mismatch");
  int64_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output too small");
  int64_t ckk = Ci * kh * kw;

  Tensor out({B, Co, Ho, Wo});
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> col(Ho * Wo, ckk);
  auto Wmat = w->value.mat(Co, ckk);  // (Co, ckk)
  for (int64_t bi = 0; bi < B; ++bi) {
    im2col(x->value.vec().data() + bi * Ci * H * W, Ci, H, W, kh, kw, pad, Ho, Wo,
           col.data());
    // (HoWo, Co) = col * Wmat^T ; write transposed into (Co, Ho*Wo)
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> o =
        col * Wmat.transpose();
    o.rowwise() += b->value.vec().transpose();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        dst(out.vec().data() + bi * Co * Ho * Wo, Co, Ho * Wo);
    dst = o.transpose();
  }

  return make_node(std::move(out), {x, w, b},
                   [x, w, b, B, Ci, H, W, Co, kh, kw, pad, Ho, Wo, ckk](Node& n) {
    auto Wmat = w->value.mat(Co, ckk);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> col(Ho * Wo, ckk);
    for (int64_t bi = 0; bi < B; ++bi) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>
          gout(n.grad.vec().data() + bi * Co * Ho * Wo, Co, Ho * Wo);
      if (w->requires_grad || b->requires_grad) {
        im2col(x->value.vec().data() + bi * Ci * H * W, Ci, H, W, kh, kw, pad, Ho,
               Wo, col.data());
        if (w->requires_grad) {
          w->ensure_grad();
          w->grad.mat(Co, ckk) += gout * col;
        }
        if (b->requires_grad) {
          b->ensure_grad();
          b->grad.vec() += gout.rowwise().sum();
        }
      }
      if (x->requires_grad) {
        x->ensure_grad();
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dcol =
            gout.transpose() * Wmat;  // (HoWo, ckk)
        col2im_accum(dcol.data(), Ci, H, W, kh, kw, pad, Ho, Wo,
                     x->grad.vec().data() + bi * Ci * H * W);
      }
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps) {
  if (x->value.rank() != 4) throw std::invalid_argument("group_norm: 4-d only");
  int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
          W = x->value.dim(3);
  if (C % groups != 0) throw std::invalid_argument("group_norm: C % groups != 0");
  if (gamma->value.numel() != C || beta->value.numel() != C)
    throw std::invalid_argument("group_norm: affine shape mismatch");
  int64_t cg = C / groups, m = cg * H * W;

  Tensor xhat(x->value.shape());
  Eigen::MatrixXd inv_std(B, groups);
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t g = 0; g < groups; ++g) {
      const double* src = x->value.vec().data() + (bi * C + g * cg) * H * W;
      Eigen::Map<const Eigen::VectorXd> seg(src, m);
      double mu = seg.mean();
      double var = (seg.array() - mu).square().mean();
      double is = 1.0 / std::sqrt(var + eps);
      inv_std(bi, g) = is;
      Eigen::Map<Eigen::VectorXd>(xhat.vec().data() + (bi * C + g * cg) * H * W, m) =
          (seg.array() - mu) * is;
    }
  Tensor out(x->value.shape());
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t c = 0; c < C; ++c) {
      int64_t off = (bi * C + c) * H * W;
      out.vec().segment(off, H * W) =
          gamma->value[c] * xhat.vec().segment(off, H * W).array() + beta->value[c];
    }

  return make_node(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat, inv_std, B, C, H, W, groups, cg, m](Node& n) {
    int64_t hw = H * W;
    if (gamma->requires_grad || beta->requires_grad) {
      gamma->ensure_grad();
      beta->ensure_grad();
      for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t c = 0; c < C; ++c) {
          int64_t off = (bi * C + c) * hw;
          auto g = n.grad.vec().segment(off, hw);
          gamma->grad.vec()[c] += g.dot(xhat.vec().segment(off, hw));
          beta->grad.vec()[c] += g.sum();
        }
    }
    if (!x->requires_grad) return;
    x->ensure_grad();
    Eigen::VectorXd dxh(m);
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t g = 0; g < groups; ++g) {
        int64_t off = (bi * C + g * cg) * hw;
        for (int64_t c = 0; c < cg; ++c)
          dxh.segment(c * hw, hw) =
              gamma->value[g * cg + c] * n.grad.vec().segment(off + c * hw, hw);
        Eigen::Map<const Eigen::VectorXd> xh(xhat.vec().data() + off, m);
        double mean_dxh = dxh.mean();
        double mean_dxh_xh = dxh.dot(xh) / static_cast<double>(m);
        x->grad.vec().segment(off, m).array() +=
            inv_std(bi, g) * (dxh.array() - mean_dxh - xh.array() * mean_dxh_xh);
      }
  });
}

Var avg_pool2(const Var& x) {
  if (x->value.rank() != 4) throw std::invalid_argument("avg_pool2: 4-d only");
  int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
          W = x->value.dim(3);
  if (H % 2 || W % 2) throw std::invalid_argument("avg_pool2: odd spatial size");
  int64_t Ho = H / 2, Wo = W / 2;
  Tensor out({B, C, Ho, Wo});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = x->value.vec().data() + bc * H * W;
    double* dst = out.vec().data() + bc * Ho * Wo;
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j)
        dst[i * Wo + j] = 0.25 * (src[(2 * i) * W + 2 * j] + src[(2 * i) * W + 2 * j + 1] +
                                  src[(2 * i + 1) * W + 2 * j] +
                                  src[(2 * i + 1) * W + 2 * j + 1]);
  }
  return make_node(std::move(out), {x}, [x, B, C, H, W, Ho, Wo](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const double* g = n.grad.vec().data() + bc * Ho * Wo;
      double* dst = x->grad.vec().data() + bc * H * W;
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          double v = 0.25 * g[i * Wo + j];
          dst[(2 * i) * W + 2 * j] += v;
          dst[(2 * i) * W + 2 * j + 1] += v;
          dst[(2 * i + 1) * W + 2 * j] += v;
          dst[(2 * i + 1) * W + 2 * j + 1] += v;
        }
    }
  });
}

Var upsample_nearest2(const Var& x) {
  if (x->value.rank() != 4) throw std::invalid_argument("upsample: 4-d only");
  int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
          W = x->value.dim(3);
  int64_t Ho = H * 2, Wo = W * 2;
  Tensor out({B, C, Ho, Wo});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = x->value.vec().data() + bc * H * W;
    double* dst = out.vec().data() + bc * Ho * Wo;
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) dst[i * Wo + j] = src[(i / 2) * W + j / 2];
  }
  return make_node(std::move(out), {x}, [x, B, C, H, W, Ho, Wo](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const double* g = n.grad.vec().data() + bc * Ho * Wo;
      double* dst = x->grad.vec().data() + bc * H * W;
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) dst[(i / 2) * W + j / 2] += g[i * Wo + j];
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  if (a->value.rank() != 4 || b->value.rank() != 4)
    throw std::invalid_argument("concat_channels: 4-d only");
  int64_t B = a->value.dim(0), Ca = a->value.dim(1), Cb = b->value.dim(1),
          H = a->value.dim(2), W = a->value.dim(3);
  if (b->value.dim(0) != B || b->value.dim(2) != H || b->value.dim(3) != W)
    throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor out({B, Ca + Cb, H, W});
  int64_t hw = H * W;
  for (int64_t bi = 0; bi < B; ++bi) {
    out.vec().segment(bi * (Ca + Cb) * hw, Ca * hw) =
        a->value.vec().segment(bi * Ca * hw, Ca * hw);
    out.vec().segment(bi * (Ca + Cb) * hw + Ca * hw, Cb * hw) =
        b->value.vec().segment(bi * Cb * hw, Cb * hw);
  }
  return make_node(std::move(out), {a, b}, [a, b, B, Ca, Cb, hw](Node& n) {
    for (int64_t bi = 0; bi < B; ++bi) {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad.vec().segment(bi * Ca * hw, Ca * hw) +=
            n.grad.vec().segment(bi * (Ca + Cb) * hw, Ca * hw);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad.vec().segment(bi * Cb * hw, Cb * hw) +=
            n.grad.vec().segment(bi * (Ca + Cb) * hw + Ca * hw, Cb * hw);
      }
    }
  });
}

Var add_channel_bias(const Var& x, const Var& s) {
  if (x->value.rank() != 4) throw std::invalid_argument("add_channel_bias: 4-d x");
  int64_t B = x->value.dim(0), C = x->value.dim(1), hw = x->value.dim(2) * x->value.dim(3);
  bool per_batch = s->value.numel() == B * C;
  if (!per_batch && s->value.numel() != C)
    throw std::invalid_argument("add_channel_bias: s must be (C) or (B,C)");
  Tensor out(x->value.shape(), x->value.vec());
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t c = 0; c < C; ++c)
      out.vec().segment((bi * C + c) * hw, hw).array() +=
          s->value[per_batch ? bi * C + c : c];
  return make_node(std::move(out), {x, s}, [x, s, B, C, hw, per_batch](Node& n) {
    if (x->requires_grad) { x->ensure_grad(); x->grad.vec() += n.grad.vec(); }
    if (s->requires_grad) {
      s->ensure_grad();
      for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t c = 0; c < C; ++c)
          s->grad.vec()[per_batch ? bi * C + c : c] +=
              n.grad.vec().segment((bi * C + c) * hw, hw).sum();
    }
  });
}

}  // namespace sparsediff::ad

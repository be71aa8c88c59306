#include "stylex/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace stylex {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

std::vector<int> drop_last(const std::vector<int>& s) {
  return std::vector<int>(s.begin(), s.end() - 1);
}

std::int64_t leading_numel(const std::vector<int>& s) {
  std::int64_t n = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

VarId Graph::push(Tensor value, bool requires_grad, std::function<void()> bwd) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  return static_cast<VarId>(nodes_.size() - 1);
}

Tensor& Graph::grad_acc(VarId v) {
  Node& n = nodes_[static_cast<std::size_t>(v)];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

const Tensor& Graph::grad(VarId v) {
  return grad_acc(v);
}

VarId Graph::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

VarId bind_param(Graph& g, Tensor& param, BindingList* binds, bool requires_grad) {
  VarId v = g.leaf(param, requires_grad);
  if (binds != nullptr) binds->push_back({&param, v});
  return v;
}

VarId Graph::add(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!same_shape(ta, tb)) throw ShapeError("add: shape mismatch");
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.numel(); ++i) out[i] = ta[i] + tb[i];
  bool rg = requires_grad(a) || requires_grad(b);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, a, b, o] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      if (requires_grad(a)) {
        Tensor& ga = grad_acc(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
      }
    };
  }
  return o;
}

VarId Graph::add_scaled(VarId a, VarId b, double ca, double cb) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!same_shape(ta, tb)) throw ShapeError("add_scaled: shape mismatch");
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.numel(); ++i) out[i] = ca * ta[i] + cb * tb[i];
  bool rg = requires_grad(a) || requires_grad(b);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, a, b, o, ca, cb] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      if (requires_grad(a)) {
        Tensor& ga = grad_acc(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += ca * g[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += cb * g[i];
      }
    };
  }
  return o;
}

VarId Graph::mul(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!same_shape(ta, tb)) throw ShapeError("mul: shape mismatch");
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.numel(); ++i) out[i] = ta[i] * tb[i];
  bool rg = requires_grad(a) || requires_grad(b);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, a, b, o] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      const Tensor& ta = value(a);
      const Tensor& tb = value(b);
      if (requires_grad(a)) {
        Tensor& ga = grad_acc(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * tb[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * ta[i];
      }
    };
  }
  return o;
}

VarId Graph::scale(VarId a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (std::int64_t i = 0; i < ta.numel(); ++i) out[i] = c * ta[i];
  bool rg = requires_grad(a);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, a, o, c] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      Tensor& ga = grad_acc(a);
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
    };
  }
  return o;
}

VarId Graph::add_bias(VarId x, VarId bias) {
  const Tensor& tx = value(x);
  const Tensor& tb = value(bias);
  if (tb.rank() != 1 || tb.dim(0) != tx.shape().back()) {
    throw ShapeError("add_bias: bias must match last dim");
  }
  const int f = tb.dim(0);
  const std::int64_t rows = leading_numel(tx.shape());
  Tensor out(tx.shape());
  for (std::int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < f; ++j) out[r * f + j] = tx[r * f + j] + tb[j];
  bool rg = requires_grad(x) || requires_grad(bias);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, bias, o, rows, f] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      if (requires_grad(x)) {
        Tensor& gx = grad_acc(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
      }
      if (requires_grad(bias)) {
        Tensor& gb = grad_acc(bias);
        for (std::int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < f; ++j) gb[j] += g[r * f + j];
      }
    };
  }
  return o;
}

VarId Graph::sigmoid(VarId x) {
  const Tensor& tx = value(x);
  Tensor out(tx.shape());
  for (std::int64_t i = 0; i < tx.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-tx[i]));
  bool rg = requires_grad(x);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      const Tensor& y = value(o);
      Tensor& gx = grad_acc(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  }
  return o;
}

VarId Graph::gelu(VarId x) {
  const Tensor& tx = value(x);
  Tensor out(tx.shape());
  for (std::int64_t i = 0; i < tx.numel(); ++i) {
    double v = tx[i];
    double u = kGeluC * (v + kGeluA * v * v * v);
    out[i] = 0.5 * v * (1.0 + std::tanh(u));
  }
  bool rg = requires_grad(x);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      const Tensor& tx = value(x);
      Tensor& gx = grad_acc(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        double v = tx[i];
        double u = kGeluC * (v + kGeluA * v * v * v);
        double th = std::tanh(u);
        double sech2 = 1.0 - th * th;
        double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * sech2 * du);
      }
    };
  }
  return o;
}

VarId Graph::matmul(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
    throw ShapeError("matmul: incompatible shapes");
  }
  const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  MapMat(out.data(), m, n).noalias() =
      MapConst(ta.data(), m, k) * MapConst(tb.data(), k, n);
  bool rg = requires_grad(a) || requires_grad(b);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, a, b, o, m, k, n] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      MapConst G(g.data(), m, n);
      if (requires_grad(a)) {
        MapMat(grad_acc(a).data(), m, k).noalias() +=
            G * MapConst(value(b).data(), k, n).transpose();
      }
      if (requires_grad(b)) {
        MapMat(grad_acc(b).data(), k, n).noalias() +=
            MapConst(value(a).data(), m, k).transpose() * G;
      }
    };
  }
  return o;
}

VarId Graph::bmm(VarId a, VarId b, bool trans_a, bool trans_b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(0) != tb.dim(0)) {
    throw ShapeError("bmm: expects rank-3 tensors with equal batch");
  }
  const int gdim = ta.dim(0);
  const int m = trans_a ? ta.dim(2) : ta.dim(1);
  const int k = trans_a ? ta.dim(1) : ta.dim(2);
  const int kb = trans_b ? tb.dim(2) : tb.dim(1);
  const int n = trans_b ? tb.dim(1) : tb.dim(2);
  if (k != kb) throw ShapeError("bmm: inner dimension mismatch");
  Tensor out({gdim, m, n});
  const std::int64_t sa = static_cast<std::int64_t>(ta.dim(1)) * ta.dim(2);
  const std::int64_t sb = static_cast<std::int64_t>(tb.dim(1)) * tb.dim(2);
  const std::int64_t so = static_cast<std::int64_t>(m) * n;
  for (int gi = 0; gi < gdim; ++gi) {
    MapConst A(ta.data() + gi * sa, ta.dim(1), ta.dim(2));
    MapConst B(tb.data() + gi * sb, tb.dim(1), tb.dim(2));
    MapMat C(out.data() + gi * so, m, n);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else C.noalias() = A.transpose() * B.transpose();
  }
  bool rg = requires_grad(a) || requires_grad(b);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, a, b, o, trans_a, trans_b, gdim, sa, sb, so, m, n] {
      const Tensor& gt = nodes_[static_cast<std::size_t>(o)].grad;
      const Tensor& ta = value(a);
      const Tensor& tb = value(b);
      for (int gi = 0; gi < gdim; ++gi) {
        MapConst G(gt.data() + gi * so, m, n);
        MapConst A(ta.data() + gi * sa, ta.dim(1), ta.dim(2));
        MapConst B(tb.data() + gi * sb, tb.dim(1), tb.dim(2));
        if (requires_grad(a)) {
          MapMat GA(grad_acc(a).data() + gi * sa, ta.dim(1), ta.dim(2));
          if (!trans_a && !trans_b) GA.noalias() += G * B.transpose();
          else if (!trans_a && trans_b) GA.noalias() += G * B;
          else if (trans_a && !trans_b) GA.noalias() += B * G.transpose();
          else GA.noalias() += B.transpose() * G.transpose();
        }
        if (requires_grad(b)) {
          MapMat GB(grad_acc(b).data() + gi * sb, tb.dim(1), tb.dim(2));
          if (!trans_a && !trans_b) GB.noalias() += A.transpose() * G;
          else if (!trans_a && trans_b) GB.noalias() += G.transpose() * A;
          else if (trans_a && !trans_b) GB.noalias() += A * G;
          else GB.noalias() += G.transpose() * A.transpose();
        }
      }
    };
  }
  return o;
}

VarId Graph::reshape(VarId x, std::vector<int> shape) {
  const Tensor& tx = value(x);
  if (Tensor::numel_of(shape) != tx.numel()) throw ShapeError("reshape: numel mismatch");
  Tensor out(std::move(shape), tx.raw());
  bool rg = requires_grad(x);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      Tensor& gx = grad_acc(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    };
  }
  return o;
}

VarId Graph::transpose_inner(VarId x) {
  const Tensor& tx = value(x);
  if (tx.rank() != 4) throw ShapeError("transpose_inner: expects rank-4");
  const int a = tx.dim(0), b = tx.dim(1), c = tx.dim(2), d = tx.dim(3);
  Tensor out({a, c, b, d});
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j)
      for (int k = 0; k < c; ++k)
        for (int l = 0; l < d; ++l)
          out[((static_cast<std::int64_t>(i) * c + k) * b + j) * d + l] =
              tx[((static_cast<std::int64_t>(i) * b + j) * c + k) * d + l];
  bool rg = requires_grad(x);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o, a, b, c, d] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      Tensor& gx = grad_acc(x);
      for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
          for (int k = 0; k < c; ++k)
            for (int l = 0; l < d; ++l)
              gx[((static_cast<std::int64_t>(i) * b + j) * c + k) * d + l] +=
                  g[((static_cast<std::int64_t>(i) * c + k) * b + j) * d + l];
    };
  }
  return o;
}

VarId Graph::concat_lastdim(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != tb.rank()) throw ShapeError("concat_lastdim: rank mismatch");
  if (drop_last(ta.shape()) != drop_last(tb.shape())) {
    throw ShapeError("concat_lastdim: leading dims mismatch");
  }
  const int fa = ta.shape().back(), fb = tb.shape().back();
  const std::int64_t rows = leading_numel(ta.shape());
  std::vector<int> shape = ta.shape();
  shape.back() = fa + fb;
  Tensor out(std::move(shape));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int j = 0; j < fa; ++j) out[r * (fa + fb) + j] = ta[r * fa + j];
    for (int j = 0; j < fb; ++j) out[r * (fa + fb) + fa + j] = tb[r * fb + j];
  }
  bool rg = requires_grad(a) || requires_grad(b);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, a, b, o, rows, fa, fb] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      if (requires_grad(a)) {
        Tensor& ga = grad_acc(a);
        for (std::int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < fa; ++j) ga[r * fa + j] += g[r * (fa + fb) + j];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        for (std::int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < fb; ++j) gb[r * fb + j] += g[r * (fa + fb) + fa + j];
      }
    };
  }
  return o;
}

VarId Graph::lookup_rows(VarId table, const std::vector<int>& ids,
                         std::vector<int> out_shape) {
  const Tensor& tt = value(table);
  if (tt.rank() != 2) throw ShapeError("lookup_rows: table must be 2D");
  const int v = tt.dim(0), e = tt.dim(1);
  if (out_shape.empty() || out_shape.back() != e ||
      Tensor::numel_of(out_shape) != static_cast<std::int64_t>(ids.size()) * e) {
    throw ShapeError("lookup_rows: out shape mismatch");
  }
  for (int id : ids) {
    if (id < 0 || id >= v) throw VocabularyError("token id out of vocabulary range");
  }
  Tensor out(std::move(out_shape));
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < e; ++j)
      out[static_cast<std::int64_t>(i) * e + j] = tt[static_cast<std::int64_t>(ids[i]) * e + j];
  bool rg = requires_grad(table);
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, table, o, ids_copy, e] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      Tensor& gt = grad_acc(table);
      for (std::size_t i = 0; i < ids_copy->size(); ++i)
        for (int j = 0; j < e; ++j)
          gt[static_cast<std::int64_t>((*ids_copy)[i]) * e + j] +=
              g[static_cast<std::int64_t>(i) * e + j];
    };
  }
  return o;
}

VarId Graph::add_positional(VarId x, VarId pos) {
  const Tensor& tx = value(x);
  const Tensor& tp = value(pos);
  if (tx.rank() != 3 || tp.rank() != 2 || tx.dim(2) != tp.dim(1) || tx.dim(1) > tp.dim(0)) {
    throw ShapeError("add_positional: incompatible shapes");
  }
  const int bsz = tx.dim(0), s = tx.dim(1), e = tx.dim(2);
  Tensor out(tx.shape());
  for (int b = 0; b < bsz; ++b)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < e; ++j)
        out[(static_cast<std::int64_t>(b) * s + i) * e + j] =
            tx[(static_cast<std::int64_t>(b) * s + i) * e + j] + tp[static_cast<std::int64_t>(i) * e + j];
  bool rg = requires_grad(x) || requires_grad(pos);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, pos, o, bsz, s, e] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      if (requires_grad(x)) {
        Tensor& gx = grad_acc(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
      }
      if (requires_grad(pos)) {
        Tensor& gp = grad_acc(pos);
        for (int b = 0; b < bsz; ++b)
          for (int i = 0; i < s; ++i)
            for (int j = 0; j < e; ++j)
              gp[static_cast<std::int64_t>(i) * e + j] +=
                  g[(static_cast<std::int64_t>(b) * s + i) * e + j];
      }
    };
  }
  return o;
}

VarId Graph::layer_norm(VarId x, VarId gain, VarId bias, double eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  const int f = tx.shape().back();
  if (tg.rank() != 1 || tb.rank() != 1 || tg.dim(0) != f || tb.dim(0) != f) {
    throw ShapeError("layer_norm: gain/bias must match last dim");
  }
  const std::int64_t rows = leading_numel(tx.shape());
  Tensor out(tx.shape());
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows) * f);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int j = 0; j < f; ++j) mu += tx[r * f + j];
    mu /= f;
    double var = 0.0;
    for (int j = 0; j < f; ++j) {
      double d = tx[r * f + j] - mu;
      var += d * d;
    }
    var /= f;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < f; ++j) {
      double xh = (tx[r * f + j] - mu) * is;
      (*xhat)[static_cast<std::size_t>(r * f + j)] = xh;
      out[r * f + j] = tg[j] * xh + tb[j];
    }
  }
  bool rg = requires_grad(x) || requires_grad(gain) || requires_grad(bias);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, gain, bias, o, rows, f, xhat, inv_std] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      const Tensor& tg = value(gain);
      for (std::int64_t r = 0; r < rows; ++r) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int j = 0; j < f; ++j) {
          double dxh = g[r * f + j] * tg[j];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * (*xhat)[static_cast<std::size_t>(r * f + j)];
        }
        mean_dxhat /= f;
        mean_dxhat_xhat /= f;
        if (requires_grad(x)) {
          Tensor& gx = grad_acc(x);
          double is = (*inv_std)[static_cast<std::size_t>(r)];
          for (int j = 0; j < f; ++j) {
            double dxh = g[r * f + j] * tg[j];
            double xh = (*xhat)[static_cast<std::size_t>(r * f + j)];
            gx[r * f + j] += is * (dxh - mean_dxhat - xh * mean_dxhat_xhat);
          }
        }
      }
      if (requires_grad(gain)) {
        Tensor& gg = grad_acc(gain);
        for (std::int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < f; ++j)
            gg[j] += g[r * f + j] * (*xhat)[static_cast<std::size_t>(r * f + j)];
      }
      if (requires_grad(bias)) {
        Tensor& gb = grad_acc(bias);
        for (std::int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < f; ++j) gb[j] += g[r * f + j];
      }
    };
  }
  return o;
}

VarId Graph::masked_softmax_lastdim(VarId scores, const Tensor& key_mask) {
  const Tensor& ts = value(scores);
  if (ts.rank() != 4) throw ShapeError("masked_softmax_lastdim: expects (B,nh,S,S)");
  const int bsz = ts.dim(0), nh = ts.dim(1), sq = ts.dim(2), sk = ts.dim(3);
  if (key_mask.rank() != 2 || key_mask.dim(0) != bsz || key_mask.dim(1) != sk) {
    throw ShapeError("masked_softmax_lastdim: mask must be (B,S)");
  }
  Tensor out(ts.shape());
  for (int b = 0; b < bsz; ++b) {
    for (int h = 0; h < nh; ++h) {
      for (int q = 0; q < sq; ++q) {
        const std::int64_t base = ((static_cast<std::int64_t>(b) * nh + h) * sq + q) * sk;
        double mx = -1e300;
        for (int k = 0; k < sk; ++k)
          if (key_mask[static_cast<std::int64_t>(b) * sk + k] > 0.5) mx = std::max(mx, ts[base + k]);
        double z = 0.0;
        for (int k = 0; k < sk; ++k) {
          if (key_mask[static_cast<std::int64_t>(b) * sk + k] > 0.5) {
            double ev = std::exp(ts[base + k] - mx);
            out[base + k] = ev;
            z += ev;
          } else {
            out[base + k] = 0.0;
          }
        }
        if (z <= 0.0) throw DegenerateInputError("softmax row fully masked");
        for (int k = 0; k < sk; ++k) out[base + k] /= z;
      }
    }
  }
  bool rg = requires_grad(scores);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, scores, o, bsz, nh, sq, sk] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      const Tensor& p = value(o);
      Tensor& gs = grad_acc(scores);
      const std::int64_t nrows = static_cast<std::int64_t>(bsz) * nh * sq;
      for (std::int64_t r = 0; r < nrows; ++r) {
        const std::int64_t base = r * sk;
        double dot = 0.0;
        for (int k = 0; k < sk; ++k) dot += g[base + k] * p[base + k];
        for (int k = 0; k < sk; ++k) gs[base + k] += p[base + k] * (g[base + k] - dot);
      }
    };
  }
  return o;
}

VarId Graph::dropout(VarId x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw RangeError("dropout rate must be < 1");
  const Tensor& tx = value(x);
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(tx.numel()));
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Tensor out(tx.shape());
  for (std::int64_t i = 0; i < tx.numel(); ++i) {
    double m = dist(rng) < keep ? 1.0 / keep : 0.0;
    (*mask)[static_cast<std::size_t>(i)] = m;
    out[i] = tx[i] * m;
  }
  bool rg = requires_grad(x);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o, mask] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      Tensor& gx = grad_acc(x);
      for (std::int64_t i = 0; i < g.numel(); ++i)
        gx[i] += g[i] * (*mask)[static_cast<std::size_t>(i)];
    };
  }
  return o;
}

VarId Graph::masked_max_seq(VarId x, const Tensor& mask) {
  const Tensor& tx = value(x);
  if (tx.rank() != 3) throw ShapeError("masked_max_seq: expects (B,S,F)");
  const int bsz = tx.dim(0), s = tx.dim(1), f = tx.dim(2);
  if (mask.rank() != 2 || mask.dim(0) != bsz || mask.dim(1) != s) {
    throw ShapeError("masked_max_seq: mask must be (B,S)");
  }
  Tensor out({bsz, f});
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(bsz) * f, -1);
  for (int b = 0; b < bsz; ++b) {
    bool any = false;
    for (int i = 0; i < s; ++i)
      if (mask[static_cast<std::int64_t>(b) * s + i] > 0.5) { any = true; break; }
    if (!any) throw DegenerateInputError("masked_max_seq: fully masked row");
    for (int j = 0; j < f; ++j) {
      double best = 0.0;
      int bi = -1;
      for (int i = 0; i < s; ++i) {
        if (mask[static_cast<std::int64_t>(b) * s + i] <= 0.5) continue;
        double v = tx[(static_cast<std::int64_t>(b) * s + i) * f + j];
        if (bi < 0 || v > best) { best = v; bi = i; }
      }
      out[static_cast<std::int64_t>(b) * f + j] = best;
      (*arg)[static_cast<std::size_t>(static_cast<std::int64_t>(b) * f + j)] = bi;
    }
  }
  bool rg = requires_grad(x);
  VarId o = push(std::move(out), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o, arg, bsz, s, f] {
      const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
      Tensor& gx = grad_acc(x);
      for (int b = 0; b < bsz; ++b)
        for (int j = 0; j < f; ++j) {
          int i = (*arg)[static_cast<std::size_t>(static_cast<std::int64_t>(b) * f + j)];
          gx[(static_cast<std::int64_t>(b) * s + i) * f + j] += g[static_cast<std::int64_t>(b) * f + j];
        }
    };
  }
  return o;
}

VarId Graph::bce_with_logits_mean(VarId logits, const Tensor& targets,
                                  const Tensor& active) {
  const Tensor& tl = value(logits);
  if (tl.rank() != 3) throw ShapeError("bce_with_logits_mean: expects (B,S,d)");
  if (targets.shape() != tl.shape()) {
    throw ShapeError("bce_with_logits_mean: target shape mismatch");
  }
  const int bsz = tl.dim(0), s = tl.dim(1), d = tl.dim(2);
  if (active.rank() != 2 || active.dim(0) != bsz || active.dim(1) != s) {
    throw ShapeError("bce_with_logits_mean: active mask must be (B,S)");
  }
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < active.numel(); ++i)
    if (active[i] > 0.5) ++count;
  double loss = 0.0;
  if (count > 0) {
    for (int b = 0; b < bsz; ++b)
      for (int i = 0; i < s; ++i) {
        if (active[static_cast<std::int64_t>(b) * s + i] <= 0.5) continue;
        for (int c = 0; c < d; ++c) {
          double x = tl[(static_cast<std::int64_t>(b) * s + i) * d + c];
          double t = targets[(static_cast<std::int64_t>(b) * s + i) * d + c];
          loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
        }
      }
    loss /= static_cast<double>(count) * d;
  }
  bool rg = requires_grad(logits) && count > 0;
  auto tgt = std::make_shared<Tensor>(targets);
  auto act = std::make_shared<Tensor>(active);
  VarId o = push(Tensor::scalar(loss), rg, nullptr);
  if (rg) {
    const double denom = static_cast<double>(count) * d;
    nodes_.back().backward = [this, logits, o, tgt, act, bsz, s, d, denom] {
      const double up = nodes_[static_cast<std::size_t>(o)].grad[0];
      const Tensor& tl = value(logits);
      Tensor& gl = grad_acc(logits);
      for (int b = 0; b < bsz; ++b)
        for (int i = 0; i < s; ++i) {
          if ((*act)[static_cast<std::int64_t>(b) * s + i] <= 0.5) continue;
          for (int c = 0; c < d; ++c) {
            std::int64_t idx = (static_cast<std::int64_t>(b) * s + i) * d + c;
            double sig = 1.0 / (1.0 + std::exp(-tl[idx]));
            gl[idx] += up * (sig - (*tgt)[idx]) / denom;
          }
        }
    };
  }
  return o;
}

VarId Graph::softmax_ce_mean(VarId logits, const std::vector<int>& labels) {
  const Tensor& tl = value(logits);
  if (tl.rank() != 2) throw ShapeError("softmax_ce_mean: expects (B,C)");
  const int bsz = tl.dim(0), c = tl.dim(1);
  if (static_cast<int>(labels.size()) != bsz) {
    throw ShapeError("softmax_ce_mean: label count mismatch");
  }
  for (int y : labels)
    if (y < 0 || y >= c) throw ValidationError("softmax_ce_mean: label out of range");
  double loss = 0.0;
  for (int b = 0; b < bsz; ++b) {
    double mx = tl[static_cast<std::int64_t>(b) * c];
    for (int j = 1; j < c; ++j) mx = std::max(mx, tl[static_cast<std::int64_t>(b) * c + j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(tl[static_cast<std::int64_t>(b) * c + j] - mx);
    loss += -(tl[static_cast<std::int64_t>(b) * c + labels[static_cast<std::size_t>(b)]] - mx - std::log(z));
  }
  loss /= bsz;
  bool rg = requires_grad(logits);
  auto lab = std::make_shared<std::vector<int>>(labels);
  VarId o = push(Tensor::scalar(loss), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, logits, o, lab, bsz, c] {
      const double up = nodes_[static_cast<std::size_t>(o)].grad[0];
      const Tensor& tl = value(logits);
      Tensor& gl = grad_acc(logits);
      for (int b = 0; b < bsz; ++b) {
        double mx = tl[static_cast<std::int64_t>(b) * c];
        for (int j = 1; j < c; ++j) mx = std::max(mx, tl[static_cast<std::int64_t>(b) * c + j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(tl[static_cast<std::int64_t>(b) * c + j] - mx);
        for (int j = 0; j < c; ++j) {
          double p = std::exp(tl[static_cast<std::int64_t>(b) * c + j] - mx) / z;
          double onehot = (j == (*lab)[static_cast<std::size_t>(b)]) ? 1.0 : 0.0;
          gl[static_cast<std::int64_t>(b) * c + j] += up * (p - onehot) / bsz;
        }
      }
    };
  }
  return o;
}

VarId Graph::reduce_sum(VarId x) {
  const Tensor& tx = value(x);
  double s = 0.0;
  for (std::int64_t i = 0; i < tx.numel(); ++i) s += tx[i];
  bool rg = requires_grad(x);
  VarId o = push(Tensor::scalar(s), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o] {
      const double up = nodes_[static_cast<std::size_t>(o)].grad[0];
      Tensor& gx = grad_acc(x);
      for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += up;
    };
  }
  return o;
}

VarId Graph::pick(VarId x, std::int64_t flat_index) {
  const Tensor& tx = value(x);
  if (flat_index < 0 || flat_index >= tx.numel()) throw ShapeError("pick: index out of range");
  bool rg = requires_grad(x);
  VarId o = push(Tensor::scalar(tx[flat_index]), rg, nullptr);
  if (rg) {
    nodes_.back().backward = [this, x, o, flat_index] {
      grad_acc(x)[flat_index] += nodes_[static_cast<std::size_t>(o)].grad[0];
    };
  }
  return o;
}

void Graph::backward(VarId root) {
  Node& r = nodes_[static_cast<std::size_t>(root)];
  if (r.value.numel() != 1) throw ShapeError("backward: root must be scalar");
  grad_acc(root)[0] = 1.0;
  for (VarId v = root; v >= 0; --v) {
    Node& n = nodes_[static_cast<std::size_t>(v)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward();
  }
}

}  // namespace stylex

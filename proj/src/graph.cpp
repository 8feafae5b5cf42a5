#include "fsga/graph.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "fsga/errors.hpp"
#include "fsga/simkl.hpp"

namespace fsga {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using MapRMc = Eigen::Map<const RowMat>;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_str(a.shape()) + " vs " +
                                Tensor::shape_str(b.shape()));
}

// Gathers conv patches of one sample into cols (C*k*k rows, Ho*Wo columns,
// column-major so each output position is one contiguous column).
void im2col(const float* x, int C, int H, int W, int k, int stride, int pad,
            int Ho, int Wo, Eigen::MatrixXf& cols) {
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const int col = oy * Wo + ox;
      float* dst = cols.data() + static_cast<int64_t>(col) * cols.rows();
      for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            *dst++ = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                         ? x[(static_cast<int64_t>(c) * H + iy) * W + ix]
                         : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const Eigen::MatrixXf& cols, int C, int H, int W, int k, int stride,
                int pad, int Ho, int Wo, float* dx) {
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const int col = oy * Wo + ox;
      const float* src = cols.data() + static_cast<int64_t>(col) * cols.rows();
      for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            const float v = *src++;
            if (iy >= 0 && iy < H && ix >= 0 && ix < W)
              dx[(static_cast<int64_t>(c) * H + iy) * W + ix] += v;
          }
        }
      }
    }
  }
}

}  // namespace

int Graph::push(Tensor value, bool requires_grad, std::function<void(Graph&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::gbuf(int i) {
  Node& n = node(i);
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape());
    n.grad_ready = true;
  }
  return n.grad;
}

const Tensor& Graph::grad(Value v) { return gbuf(v.idx); }

Value Graph::input(Tensor t) { return {push(std::move(t), false, nullptr)}; }

Value Graph::param(Tensor* storage, bool trainable) {
  auto it = param_nodes_.find(storage);
  if (it != param_nodes_.end()) return {it->second};
  const int idx = push(*storage, trainable, nullptr);
  param_nodes_.emplace(storage, idx);
  return {idx};
}

const Tensor* Graph::param_grad(const Tensor* storage) const {
  auto it = param_nodes_.find(storage);
  if (it == param_nodes_.end()) return nullptr;
  const Node& n = nodes_[static_cast<size_t>(it->second)];
  if (!n.requires_grad || !n.grad_ready) return nullptr;
  return &n.grad;
}

void Graph::backward(Value scalar_loss) {
  Node& ln = node(scalar_loss.idx);
  if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  gbuf(scalar_loss.idx)[0] = 1.0f;
  for (int i = scalar_loss.idx; i >= 0; --i) {
    Node& n = node(i);
    if (n.requires_grad && n.grad_ready && n.back) n.back(*this);
  }
}

Value Graph::add(Value a, Value b) {
  check_same_shape(val(a), val(b), "add");
  Tensor out = val(a);
  const Tensor& tb = val(b);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
  const int ia = a.idx, ib = b.idx;
  const int self = push(std::move(out), needs(ia) || needs(ib), nullptr);
  node(self).back = [ia, ib, self](Graph& g) {
    const Tensor& go = g.node(self).grad;
    if (g.needs(ia)) {
      Tensor& ga = g.gbuf(ia);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (g.needs(ib)) {
      Tensor& gb = g.gbuf(ib);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i];
    }
  };
  return {self};
}

Value Graph::sub(Value a, Value b) {
  check_same_shape(val(a), val(b), "sub");
  Tensor out = val(a);
  const Tensor& tb = val(b);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
  const int ia = a.idx, ib = b.idx;
  const int self = push(std::move(out), needs(ia) || needs(ib), nullptr);
  node(self).back = [ia, ib, self](Graph& g) {
    const Tensor& go = g.node(self).grad;
    if (g.needs(ia)) {
      Tensor& ga = g.gbuf(ia);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (g.needs(ib)) {
      Tensor& gb = g.gbuf(ib);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  };
  return {self};
}

Value Graph::mul(Value a, Value b) {
  check_same_shape(val(a), val(b), "mul");
  Tensor out = val(a);
  const Tensor& tb = val(b);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
  const int ia = a.idx, ib = b.idx;
  const int self = push(std::move(out), needs(ia) || needs(ib), nullptr);
  node(self).back = [ia, ib, self](Graph& g) {
    const Tensor& go = g.node(self).grad;
    const Tensor& va = g.node(ia).value;
    const Tensor& vb = g.node(ib).value;
    if (g.needs(ia)) {
      Tensor& ga = g.gbuf(ia);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * vb[i];
    }
    if (g.needs(ib)) {
      Tensor& gb = g.gbuf(ib);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * va[i];
    }
  };
  return {self};
}

Value Graph::scale(Value a, float s) {
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  const int ia = a.idx;
  const int self = push(std::move(out), needs(ia), nullptr);
  node(self).back = [ia, s, self](Graph& g) {
    if (!g.needs(ia)) return;
    const Tensor& go = g.node(self).grad;
    Tensor& ga = g.gbuf(ia);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * s;
  };
  return {self};
}

Value Graph::matmul(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes");
  const int n = ta.dim(0), k = ta.dim(1), m = tb.dim(1);
  Tensor out({n, m});
  MapRM(out.data(), n, m).noalias() =
      MapRMc(ta.data(), n, k) * MapRMc(tb.data(), k, m);
  const int ia = a.idx, ib = b.idx;
  const int self = push(std::move(out), needs(ia) || needs(ib), nullptr);
  node(self).back = [ia, ib, n, k, m, self](Graph& g) {
    const Tensor& go = g.node(self).grad;
    MapRMc gmap(go.data(), n, m);
    if (g.needs(ia)) {
      MapRM(g.gbuf(ia).data(), n, k).noalias() +=
          gmap * MapRMc(g.node(ib).value.data(), k, m).transpose();
    }
    if (g.needs(ib)) {
      MapRM(g.gbuf(ib).data(), k, m).noalias() +=
          MapRMc(g.node(ia).value.data(), n, k).transpose() * gmap;
    }
  };
  return {self};
}

Value Graph::dense(Value x, Value w, Value b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 2 || tw.rank() != 2 || tx.dim(1) != tw.dim(0) || tb.numel() != tw.dim(1))
    throw std::invalid_argument("dense: incompatible shapes");
  const int n = tx.dim(0), in = tx.dim(1), out_dim = tw.dim(1);
  Tensor out({n, out_dim});
  MapRM om(out.data(), n, out_dim);
  om.noalias() = MapRMc(tx.data(), n, in) * MapRMc(tw.data(), in, out_dim);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < out_dim; ++c) out[static_cast<int64_t>(r) * out_dim + c] += tb[c];
  const int ix = x.idx, iw = w.idx, ib = b.idx;
  const int self = push(std::move(out), needs(ix) || needs(iw) || needs(ib), nullptr);
  node(self).back = [ix, iw, ib, n, in, out_dim, self](Graph& g) {
    const Tensor& go = g.node(self).grad;
    MapRMc gmap(go.data(), n, out_dim);
    if (g.needs(ix)) {
      MapRM(g.gbuf(ix).data(), n, in).noalias() +=
          gmap * MapRMc(g.node(iw).value.data(), in, out_dim).transpose();
    }
    if (g.needs(iw)) {
      MapRM(g.gbuf(iw).data(), in, out_dim).noalias() +=
          MapRMc(g.node(ix).value.data(), n, in).transpose() * gmap;
    }
    if (g.needs(ib)) {
      Tensor& gb = g.gbuf(ib);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < out_dim; ++c) gb[c] += go[static_cast<int64_t>(r) * out_dim + c];
    }
  };
  return {self};
}

Value Graph::conv2d(Value x, Value w, Value b, int stride, int pad) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 4 || tw.rank() != 4 || tx.dim(1) != tw.dim(1) || tw.dim(2) != tw.dim(3))
    throw std::invalid_argument("conv2d: incompatible shapes");
  const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  const int O = tw.dim(0), k = tw.dim(2);
  if (tb.numel() != O) throw std::invalid_argument("conv2d: bias size mismatch");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: output collapses to zero size");

  Tensor out({N, O, Ho, Wo});
  const int ckk = C * k * k, hw = Ho * Wo;
  Eigen::MatrixXf cols(ckk, hw);
  MapRMc wmap(tw.data(), O, ckk);
  for (int n = 0; n < N; ++n) {
    im2col(tx.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, k, stride, pad, Ho, Wo, cols);
    MapRM omap(out.data() + static_cast<int64_t>(n) * O * hw, O, hw);
    omap.noalias() = wmap * cols;
    for (int o = 0; o < O; ++o) omap.row(o).array() += tb[o];
  }

  const int ix = x.idx, iw = w.idx, ib = b.idx;
  const int self = push(std::move(out), needs(ix) || needs(iw) || needs(ib), nullptr);
  node(self).back = [ix, iw, ib, N, C, H, W, O, k, stride, pad, Ho, Wo, self](Graph& g) {
    const Tensor& go = g.node(self).grad;
    const Tensor& tx2 = g.node(ix).value;
    const Tensor& tw2 = g.node(iw).value;
    const int ckk = C * k * k, hw = Ho * Wo;
    Eigen::MatrixXf cols(ckk, hw);
    Eigen::MatrixXf dcols(ckk, hw);
    MapRMc wmap(tw2.data(), O, ckk);
    const bool nx = g.needs(ix), nw = g.needs(iw), nb = g.needs(ib);
    for (int n = 0; n < N; ++n) {
      MapRMc gmap(go.data() + static_cast<int64_t>(n) * O * hw, O, hw);
      if (nw) {
        im2col(tx2.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, k, stride, pad, Ho, Wo, cols);
        MapRM(g.gbuf(iw).data(), O, ckk).noalias() += gmap * cols.transpose();
      }
      if (nx) {
        dcols.noalias() = wmap.transpose() * gmap;
        col2im_add(dcols, C, H, W, k, stride, pad, Ho, Wo,
                   g.gbuf(ix).data() + static_cast<int64_t>(n) * C * H * W);
      }
      if (nb) {
        Tensor& gb = g.gbuf(ib);
        for (int o = 0; o < O; ++o) gb[o] += gmap.row(o).sum();
      }
    }
  };
  return {self};
}

Value Graph::upsample2(Value x) {
  const Tensor& tx = val(x);
  if (tx.rank() != 4) throw std::invalid_argument("upsample2: expects NCHW");
  const int N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  Tensor out({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = tx.data() + static_cast<int64_t>(nc) * H * W;
    float* dst = out.data() + static_cast<int64_t>(nc) * 4 * H * W;
    for (int y = 0; y < H; ++y)
      for (int x2 = 0; x2 < W; ++x2) {
        const float v = src[y * W + x2];
        float* d = dst + (2 * y) * (2 * W) + 2 * x2;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }
  const int ix = x.idx;
  const int self = push(std::move(out), needs(ix), nullptr);
  node(self).back = [ix, N, C, H, W, self](Graph& g) {
    if (!g.needs(ix)) return;
    const Tensor& go = g.node(self).grad;
    Tensor& gx = g.gbuf(ix);
    for (int nc = 0; nc < N * C; ++nc) {
      const float* src = go.data() + static_cast<int64_t>(nc) * 4 * H * W;
      float* dst = gx.data() + static_cast<int64_t>(nc) * H * W;
      for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2) {
          const float* s = src + (2 * y) * (2 * W) + 2 * x2;
          dst[y * W + x2] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
        }
    }
  };
  return {self};
}

Value Graph::leaky_relu(Value x, float alpha) {
  Tensor out = val(x);
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out[i] < 0.0f) out[i] *= alpha;
  const int ix = x.idx;
  const int self = push(std::move(out), needs(ix), nullptr);
  node(self).back = [ix, alpha, self](Graph& g) {
    if (!g.needs(ix)) return;
    const Tensor& go = g.node(self).grad;
    const Tensor& vx = g.node(ix).value;
    Tensor& gx = g.gbuf(ix);
    for (int64_t i = 0; i < go.numel(); ++i)
      gx[i] += go[i] * (vx[i] >= 0.0f ? 1.0f : alpha);
  };
  return {self};
}

Value Graph::tanh_act(Value x) {
  Tensor out = val(x);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  const int ix = x.idx;
  const int self = push(std::move(out), needs(ix), nullptr);
  node(self).back = [ix, self](Graph& g) {
    if (!g.needs(ix)) return;
    const Tensor& go = g.node(self).grad;
    const Tensor& vy = g.node(self).value;
    Tensor& gx = g.gbuf(ix);
    for (int64_t i = 0; i < go.numel(); ++i) gx[i] += go[i] * (1.0f - vy[i] * vy[i]);
  };
  return {self};
}

Value Graph::softplus(Value x) {
  Tensor out = val(x);
  for (int64_t i = 0; i < out.numel(); ++i) {
    const float v = out[i];
    out[i] = std::max(v, 0.0f) + std::log1p(std::exp(-std::abs(v)));
  }
  const int ix = x.idx;
  const int self = push(std::move(out), needs(ix), nullptr);
  node(self).back = [ix, self](Graph& g) {
    if (!g.needs(ix)) return;
    const Tensor& go = g.node(self).grad;
    const Tensor& vx = g.node(ix).value;
    Tensor& gx = g.gbuf(ix);
    for (int64_t i = 0; i < go.numel(); ++i) {
      const float s = 1.0f / (1.0f + std::exp(-vx[i]));  // sigmoid
      gx[i] += go[i] * s;
    }
  };
  return {self};
}

Value Graph::mean_all(Value x) {
  const Tensor& tx = val(x);
  double s = 0.0;
  for (int64_t i = 0; i < tx.numel(); ++i) s += tx[i];
  const float inv = 1.0f / static_cast<float>(tx.numel());
  Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(tx.numel())));
  const int ix = x.idx;
  const int self = push(std::move(out), needs(ix), nullptr);
  node(self).back = [ix, inv, self](Graph& g) {
    if (!g.needs(ix)) return;
    const float go = g.node(self).grad[0] * inv;
    Tensor& gx = g.gbuf(ix);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += go;
  };
  return {self};
}

Value Graph::mean_per_sample(Value x) {
  const Tensor& tx = val(x);
  if (tx.rank() < 2) throw std::invalid_argument("mean_per_sample: rank >= 2 required");
  const int n = tx.dim(0);
  const int64_t f = tx.numel() / n;
  Tensor out({n, 1});
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    const float* row = tx.data() + i * f;
    for (int64_t j = 0; j < f; ++j) s += row[j];
    out[i] = static_cast<float>(s / static_cast<double>(f));
  }
  const int ix = x.idx;
  const float inv = 1.0f / static_cast<float>(f);
  const int self = push(std::move(out), needs(ix), nullptr);
  node(self).back = [ix, n, f, inv, self](Graph& g) {
    if (!g.needs(ix)) return;
    const Tensor& go = g.node(self).grad;
    Tensor& gx = g.gbuf(ix);
    for (int i = 0; i < n; ++i) {
      const float v = go[i] * inv;
      float* row = gx.data() + i * f;
      for (int64_t j = 0; j < f; ++j) row[j] += v;
    }
  };
  return {self};
}

Value Graph::reshape(Value x, std::vector<int> shape) {
  const Tensor& tx = val(x);
  if (Tensor::numel_of(shape) != tx.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = tx.reshaped(shape);
  const int ix = x.idx;
  const int self = push(std::move(out), needs(ix), nullptr);
  node(self).back = [ix, self](Graph& g) {
    if (!g.needs(ix)) return;
    const Tensor& go = g.node(self).grad;
    Tensor& gx = g.gbuf(ix);
    for (int64_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
  };
  return {self};
}

Value Graph::dist_consistency(const std::vector<Value>& adapted_acts,
                              const std::vector<std::vector<double>>& source_probs) {
  if (adapted_acts.empty() || adapted_acts.size() != source_probs.size())
    throw std::invalid_argument("dist_consistency: layer count mismatch");
  const int n = val(adapted_acts[0]).dim(0);
  double loss = 0.0;
  bool any = false;
  std::vector<int> idxs;
  for (size_t l = 0; l < adapted_acts.size(); ++l) {
    const Tensor& t = val(adapted_acts[l]);
    if (t.dim(0) != n) throw std::invalid_argument("dist_consistency: batch size mismatch");
    const int f = static_cast<int>(t.numel() / n);
    loss += detail::dist_kl_layer(t.data(), n, f, source_probs[l], nullptr);
    any = any || needs(adapted_acts[l].idx);
    idxs.push_back(adapted_acts[l].idx);
  }
  auto probs = source_probs;  // captured by value for the backward pass
  const int self = push(Tensor::scalar(static_cast<float>(loss)), any, nullptr);
  node(self).back = [idxs, probs = std::move(probs), n, self](Graph& g) {
    const float go = g.node(self).grad[0];
    if (go == 0.0f) return;
    for (size_t l = 0; l < idxs.size(); ++l) {
      if (!g.needs(idxs[l])) continue;
      const Tensor& t = g.node(idxs[l]).value;
      const int f = static_cast<int>(t.numel() / n);
      std::vector<double> d(static_cast<size_t>(n) * f, 0.0);
      detail::dist_kl_layer(t.data(), n, f, probs[l], d.data());
      Tensor& gx = g.gbuf(idxs[l]);
      for (int64_t i = 0; i < t.numel(); ++i)
        gx[i] += go * static_cast<float>(d[static_cast<size_t>(i)]);
    }
  };
  return {self};
}

}  // namespace fsga

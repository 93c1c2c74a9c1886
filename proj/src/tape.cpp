#include "surt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "surt/kernels.hpp"

namespace surt {

namespace {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}


}  // namespace

template <class T>
Var Tape<T>::push(Tensor<T> value, bool needs_grad) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  requires_.push_back(needs_grad);
  backward_.emplace_back();
  return Var{values_.size() - 1};
}

template <class T>
bool Tape<T>::any_requires(std::initializer_list<Var> vs) const {
  for (Var v : vs) {
    if (requires_[v.id]) return true;
  }
  return false;
}

template <class T>
Tensor<T>& Tape<T>::grad(Var v) {
  auto& g = grads_[v.id];
  if (g.empty() && !values_[v.id].empty()) g = Tensor<T>(values_[v.id].shape());
  return g;
}

template <class T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <class T>
Var Tape<T>::input(Tensor<T> value) {
  return push(std::move(value), true);
}

template <class T>
Var Tape<T>::param(const std::string& name) {
  if (store_ == nullptr) fail(ErrorKind::BadConfig, "tape has no parameter store");
  const std::size_t slot = store_->index_of(name);
  Var v = push(store_->slots()[slot].value, true);
  param_nodes_.emplace_back(v.id, slot);
  return v;
}

template <class T>
Var Tape<T>::record(Tensor<T> value, std::vector<Var> parents, std::function<void(Var)> backward) {
  bool req = false;
  for (Var p : parents) req = req || requires_[p.id];
  Var out = push(std::move(value), req);
  if (req) backward_[out.id] = [fn = std::move(backward), out] { fn(out); };
  return out;
}

template <class T>
void Tape<T>::backward(Var out, T seed) {
  if (values_[out.id].size() != 1) fail(ErrorKind::ShapeMismatch, "backward needs a scalar output");
  grad(out)[0] += seed;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (!requires_[i] || grads_[i].empty() || !backward_[i]) continue;
    backward_[i]();
  }
}

template <class T>
void Tape<T>::accumulate_param_grads(std::vector<Tensor<T>>& grads) const {
  if (store_ == nullptr) return;
  if (grads.size() < store_->size()) grads.resize(store_->size());
  for (auto [node, slot] : param_nodes_) {
    if (grads_[node].empty()) continue;
    auto& dst = grads[slot];
    if (dst.empty()) dst = Tensor<T>(values_[node].shape());
    kernels::axpy(T(1), grads_[node].data(), dst.data(), dst.size());
  }
}

template <class T>
Var Tape<T>::matmul(Var x, Var w) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  const std::size_t n = xv.rows(), k = xv.cols(), m = wv.cols();
  if (wv.rows() != k) {
    fail(ErrorKind::ShapeMismatch, "matmul " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(n, m);
  kernels::gemm_nn(xv.data(), wv.data(), out.data(), n, k, m);
  return record(std::move(out), {x, w}, [this, x, w, n, k, m](Var o) {
    const auto& g = grads_[o.id];
    if (requires_[x.id]) kernels::gemm_nt(g.data(), value(w).data(), grad(x).data(), n, m, k);
    if (requires_[w.id]) kernels::gemm_tn(value(x).data(), g.data(), grad(w).data(), n, k, m);
  });
}

template <class T>
Var Tape<T>::add_bias(Var x, Var b) {
  const auto& xv = value(x);
  const auto& bv = value(b);
  const std::size_t n = xv.rows(), m = xv.cols();
  if (bv.size() != m) fail(ErrorKind::ShapeMismatch, "add_bias width");
  Tensor<T> out = xv;
  for (std::size_t r = 0; r < n; ++r) kernels::axpy(T(1), bv.data(), out.row(r), m);
  return record(std::move(out), {x, b}, [this, x, b, n, m](Var o) {
    const auto& g = grads_[o.id];
    if (requires_[x.id]) kernels::axpy(T(1), g.data(), grad(x).data(), g.size());
    if (requires_[b.id]) {
      auto& gb = grad(b);
      for (std::size_t r = 0; r < n; ++r) kernels::axpy(T(1), g.row(r), gb.data(), m);
    }
  });
}

template <class T>
Var Tape<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor<T> out = value(a);
  kernels::axpy(T(1), value(b).data(), out.data(), out.size());
  return record(std::move(out), {a, b}, [this, a, b](Var o) {
    const auto& g = grads_[o.id];
    if (requires_[a.id]) kernels::axpy(T(1), g.data(), grad(a).data(), g.size());
    if (requires_[b.id]) kernels::axpy(T(1), g.data(), grad(b).data(), g.size());
  });
}

template <class T>
Var Tape<T>::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Tensor<T> out = value(a);
  kernels::axpy(T(-1), value(b).data(), out.data(), out.size());
  return record(std::move(out), {a, b}, [this, a, b](Var o) {
    const auto& g = grads_[o.id];
    if (requires_[a.id]) kernels::axpy(T(1), g.data(), grad(a).data(), g.size());
    if (requires_[b.id]) kernels::axpy(T(-1), g.data(), grad(b).data(), g.size());
  });
}

template <class T>
Var Tape<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  const auto& av = value(a);
  const auto& bv = value(b);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return record(std::move(out), {a, b}, [this, a, b](Var o) {
    const auto& g = grads_[o.id];
    if (requires_[a.id]) {
      auto& ga = grad(a);
      const auto& bv2 = value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (requires_[b.id]) {
      auto& gb = grad(b);
      const auto& av2 = value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

template <class T>
Var Tape<T>::scale(Var a, T s) {
  Tensor<T> out = value(a);
  for (auto& v : out.values()) v *= s;
  return record(std::move(out), {a}, [this, a, s](Var o) {
    kernels::axpy(s, grads_[o.id].data(), grad(a).data(), grads_[o.id].size());
  });
}

template <class T>
Var Tape<T>::one_minus(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.values()) v = T(1) - v;
  return record(std::move(out), {a}, [this, a](Var o) {
    kernels::axpy(T(-1), grads_[o.id].data(), grad(a).data(), grads_[o.id].size());
  });
}

template <class T>
Var Tape<T>::add_const(Var a, const Tensor<T>& c) {
  if (value(a).size() != c.size()) fail(ErrorKind::ShapeMismatch, "add_const size");
  Tensor<T> out = value(a);
  kernels::axpy(T(1), c.data(), out.data(), out.size());
  return record(std::move(out), {a}, [this, a](Var o) {
    kernels::axpy(T(1), grads_[o.id].data(), grad(a).data(), grads_[o.id].size());
  });
}

template <class T>
Var Tape<T>::sigmoid(Var a) {
  Tensor<T> out = value(a);
  kernels::sigmoid_inplace(out.data(), out.size());
  return record(std::move(out), {a}, [this, a](Var o) {
    const auto& g = grads_[o.id];
    const auto& y = values_[o.id];
    auto& ga = grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <class T>
Var Tape<T>::tanh(Var a) {
  Tensor<T> out = value(a);
  kernels::tanh_inplace(out.data(), out.size());
  return record(std::move(out), {a}, [this, a](Var o) {
    const auto& g = grads_[o.id];
    const auto& y = values_[o.id];
    auto& ga = grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <class T>
Var Tape<T>::relu(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return record(std::move(out), {a}, [this, a](Var o) {
    const auto& g = grads_[o.id];
    const auto& x = values_[a.id];
    auto& ga = grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T(0)) ga[i] += g[i];
    }
  });
}

template <class T>
Var Tape<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
  const auto& xv = value(x);
  const std::size_t n = xv.rows(), d = xv.cols();
  if (value(gain).size() != d || value(bias).size() != d) fail(ErrorKind::ShapeMismatch, "layer_norm width");
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(n);
  const auto& gv = value(gain);
  const auto& bv = value(bias);
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = xv.row(r);
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat.at(r, j) = (xr[j] - mean) * inv_std[r];
      out.at(r, j) = gv[j] * xhat.at(r, j) + bv[j];
    }
  }
  return record(std::move(out), {x, gain, bias},
                [this, x, gain, bias, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Var o) {
                  const auto& g = grads_[o.id];
                  const auto& gv2 = value(gain);
                  if (requires_[gain.id] || requires_[bias.id]) {
                    auto& gg = grad(gain);
                    auto& gb = grad(bias);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t j = 0; j < d; ++j) {
                        gg[j] += g.at(r, j) * xhat.at(r, j);
                        gb[j] += g.at(r, j);
                      }
                    }
                  }
                  if (!requires_[x.id]) return;
                  auto& gx = grad(x);
                  std::vector<T> dxhat(d);
                  for (std::size_t r = 0; r < n; ++r) {
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                      dxhat[j] = g.at(r, j) * gv2[j];
                      mean_d += dxhat[j];
                      mean_dx += dxhat[j] * xhat.at(r, j);
                    }
                    mean_d /= static_cast<T>(d);
                    mean_dx /= static_cast<T>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                      gx.at(r, j) += inv_std[r] * (dxhat[j] - mean_d - xhat.at(r, j) * mean_dx);
                    }
                  }
                });
}

template <class T>
Var Tape<T>::causal_window(Var x, std::size_t k) {
  const auto& xv = value(x);
  const std::size_t n = xv.rows(), f = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(n, k * f);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
      if (src < 0) continue;
      std::copy_n(xv.row(static_cast<std::size_t>(src)), f, out.row(t) + j * f);
    }
  }
  return record(std::move(out), {x}, [this, x, n, f, k](Var o) {
    const auto& g = grads_[o.id];
    auto& gx = grad(x);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
        if (src < 0) continue;
        kernels::axpy(T(1), g.row(t) + j * f, gx.row(static_cast<std::size_t>(src)), f);
      }
    }
  });
}

template <class T>
Var Tape<T>::gather_rows(Var x, std::vector<std::ptrdiff_t> index) {
  const auto& xv = value(x);
  const std::size_t f = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(index.size(), f);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    if (static_cast<std::size_t>(index[i]) >= xv.rows()) fail(ErrorKind::ShapeMismatch, "gather_rows index");
    std::copy_n(xv.row(static_cast<std::size_t>(index[i])), f, out.row(i));
  }
  return record(std::move(out), {x}, [this, x, f, index = std::move(index)](Var o) {
    const auto& g = grads_[o.id];
    auto& gx = grad(x);
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= 0) kernels::axpy(T(1), g.row(i), gx.row(static_cast<std::size_t>(index[i])), f);
    }
  });
}

template <class T>
Var Tape<T>::overlap_add(Var x, std::vector<std::ptrdiff_t> target, std::size_t out_rows) {
  const auto& xv = value(x);
  const std::size_t f = xv.cols();
  if (target.size() != xv.rows()) fail(ErrorKind::ShapeMismatch, "overlap_add target length");
  std::vector<T> coverage(out_rows, T(0));
  for (auto t : target) {
    if (t >= 0) coverage.at(static_cast<std::size_t>(t)) += T(1);
  }
  Tensor<T> out = Tensor<T>::matrix(out_rows, f);
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 0) continue;
    const auto t = static_cast<std::size_t>(target[i]);
    kernels::axpy(T(1) / coverage[t], xv.row(i), out.row(t), f);
  }
  return record(std::move(out), {x},
                [this, x, f, target = std::move(target), coverage = std::move(coverage)](Var o) {
                  const auto& g = grads_[o.id];
                  auto& gx = grad(x);
                  for (std::size_t i = 0; i < target.size(); ++i) {
                    if (target[i] < 0) continue;
                    const auto t = static_cast<std::size_t>(target[i]);
                    kernels::axpy(T(1) / coverage[t], g.row(t), gx.row(i), f);
                  }
                });
}

template <class T>
Var Tape<T>::concat_cols(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.rows() != bv.rows()) fail(ErrorKind::ShapeMismatch, "concat_cols rows");
  const std::size_t n = av.rows(), fa = av.cols(), fb = bv.cols();
  Tensor<T> out = Tensor<T>::matrix(n, fa + fb);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.row(r), fa, out.row(r));
    std::copy_n(bv.row(r), fb, out.row(r) + fa);
  }
  return record(std::move(out), {a, b}, [this, a, b, n, fa, fb](Var o) {
    const auto& g = grads_[o.id];
    if (requires_[a.id]) {
      auto& ga = grad(a);
      for (std::size_t r = 0; r < n; ++r) kernels::axpy(T(1), g.row(r), ga.row(r), fa);
    }
    if (requires_[b.id]) {
      auto& gb = grad(b);
      for (std::size_t r = 0; r < n; ++r) kernels::axpy(T(1), g.row(r) + fa, gb.row(r), fb);
    }
  });
}

template <class T>
Var Tape<T>::sum_all(Var a) {
  T s = 0;
  for (T v : value(a).values()) s += v;
  return record(Tensor<T>({1, 1}, s), {a}, [this, a](Var o) {
    const T g = grads_[o.id][0];
    for (auto& v : grad(a).values()) v += g;
  });
}

template <class T>
Var Tape<T>::lstm(Var x, Var w_input, Var w_hidden, Var bias, const std::vector<std::vector<std::size_t>>& sequences,
                  bool reverse) {
  const auto& xv = value(x);
  const auto& wx = value(w_input);
  const auto& wh = value(w_hidden);
  const std::size_t n = xv.rows(), in = xv.cols();
  const std::size_t hidden = wh.rows();
  const std::size_t g4 = 4 * hidden;
  if (wx.rows() != in || wx.cols() != g4 || wh.cols() != g4 || value(bias).size() != g4) {
    fail(ErrorKind::ShapeMismatch, "lstm weights " + shape_string(wx.shape()) + " " + shape_string(wh.shape()));
  }

  // prev[r] is the row processed before r in its sequence, -1 at the start.
  std::vector<std::ptrdiff_t> prev(n, -1);
  std::vector<bool> seen(n, false);
  std::size_t max_len = 0;
  for (const auto& seq : sequences) {
    max_len = std::max(max_len, seq.size());
    for (std::size_t s = 0; s < seq.size(); ++s) {
      const std::size_t r = seq[reverse ? seq.size() - 1 - s : s];
      if (r >= n || seen[r]) fail(ErrorKind::ShapeMismatch, "lstm sequences must cover distinct rows");
      seen[r] = true;
      if (s > 0) prev[r] = static_cast<std::ptrdiff_t>(seq[reverse ? seq.size() - s : s - 1]);
    }
  }
  // step_rows[s] lists the rows processed at step s across all sequences.
  std::vector<std::vector<std::size_t>> step_rows(max_len);
  for (const auto& seq : sequences) {
    for (std::size_t s = 0; s < seq.size(); ++s) step_rows[s].push_back(seq[reverse ? seq.size() - 1 - s : s]);
  }

  Tensor<T> pre = Tensor<T>::matrix(n, g4);  // x W_input + bias, later gate activations
  kernels::gemm_nn(xv.data(), wx.data(), pre.data(), n, in, g4);
  for (std::size_t r = 0; r < n; ++r) kernels::axpy(T(1), value(bias).data(), pre.row(r), g4);
  Tensor<T> cell = Tensor<T>::matrix(n, hidden);
  Tensor<T> tcell = Tensor<T>::matrix(n, hidden);
  Tensor<T> out = Tensor<T>::matrix(n, hidden);

  std::vector<T> hprev, gates;
  for (std::size_t s = 0; s < max_len; ++s) {
    const auto& rows = step_rows[s];
    const std::size_t batch = rows.size();
    hprev.assign(batch * hidden, T(0));
    gates.assign(batch * g4, T(0));
    for (std::size_t b = 0; b < batch; ++b) {
      const auto p = prev[rows[b]];
      if (p >= 0) std::copy_n(out.row(static_cast<std::size_t>(p)), hidden, hprev.data() + b * hidden);
      std::copy_n(pre.row(rows[b]), g4, gates.data() + b * g4);
    }
    kernels::gemm_nn(hprev.data(), wh.data(), gates.data(), batch, hidden, g4);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t r = rows[b];
      T* gr = gates.data() + b * g4;
      const auto p = prev[r];
      T* act = pre.row(r);
      T* cr = cell.row(r);
      T* tr = tcell.row(r);
      T* hr = out.row(r);
      kernels::sigmoid_inplace(gr, 2 * hidden);
      kernels::tanh_inplace(gr + 2 * hidden, hidden);
      kernels::sigmoid_inplace(gr + 3 * hidden, hidden);
      for (std::size_t j = 0; j < hidden; ++j) {
        const T c_prev = p >= 0 ? cell.at(static_cast<std::size_t>(p), j) : T(0);
        cr[j] = gr[hidden + j] * c_prev + gr[j] * gr[2 * hidden + j];
      }
      std::copy_n(cr, hidden, tr);
      kernels::tanh_inplace(tr, hidden);
      for (std::size_t j = 0; j < hidden; ++j) hr[j] = gr[3 * hidden + j] * tr[j];
      std::copy_n(gr, g4, act);
    }
  }

  return record(std::move(out), {x, w_input, w_hidden, bias},
                [this, x, w_input, w_hidden, bias, n, in, hidden, g4, prev = std::move(prev),
                 step_rows = std::move(step_rows), act = std::move(pre), cell = std::move(cell),
                 tcell = std::move(tcell)](Var o) {
                  const auto& g = grads_[o.id];
                  const auto& h = values_[o.id];
                  const auto& whv = value(w_hidden);
                  Tensor<T> dh_carry = Tensor<T>::matrix(n, hidden);
                  Tensor<T> dc_carry = Tensor<T>::matrix(n, hidden);
                  Tensor<T> dpre = Tensor<T>::matrix(n, g4);
                  const bool need_wh = requires_[w_hidden.id];
                  Tensor<T>* gwh = need_wh ? &grad(w_hidden) : nullptr;
                  std::vector<T> dgates, dhprev;
                  for (std::size_t s = step_rows.size(); s-- > 0;) {
                    const auto& rows = step_rows[s];
                    const std::size_t batch = rows.size();
                    dgates.assign(batch * g4, T(0));
                    for (std::size_t b = 0; b < batch; ++b) {
                      const std::size_t r = rows[b];
                      const auto p = prev[r];
                      const T* a = act.row(r);
                      T* dg = dgates.data() + b * g4;
                      for (std::size_t j = 0; j < hidden; ++j) {
                        const T ig = a[j], fg = a[hidden + j], cg = a[2 * hidden + j], og = a[3 * hidden + j];
                        const T tc = tcell.at(r, j);
                        const T dh = g.at(r, j) + dh_carry.at(r, j);
                        const T dc = dc_carry.at(r, j) + dh * og * (T(1) - tc * tc);
                        const T c_prev = p >= 0 ? cell.at(static_cast<std::size_t>(p), j) : T(0);
                        dg[j] = dc * cg * ig * (T(1) - ig);
                        dg[hidden + j] = dc * c_prev * fg * (T(1) - fg);
                        dg[2 * hidden + j] = dc * ig * (T(1) - cg * cg);
                        dg[3 * hidden + j] = dh * tc * og * (T(1) - og);
                        if (p >= 0) dc_carry.at(static_cast<std::size_t>(p), j) += dc * fg;
                      }
                      std::copy_n(dg, g4, dpre.row(r));
                    }
                    dhprev.assign(batch * hidden, T(0));
                    kernels::gemm_nt(dgates.data(), whv.data(), dhprev.data(), batch, g4, hidden);
                    for (std::size_t b = 0; b < batch; ++b) {
                      const auto p = prev[rows[b]];
                      if (p >= 0) {
                        kernels::axpy(T(1), dhprev.data() + b * hidden, dh_carry.row(static_cast<std::size_t>(p)), hidden);
                      }
                    }
                  }
                  if (need_wh) {
                    Tensor<T> hp = Tensor<T>::matrix(n, hidden);
                    for (std::size_t r = 0; r < n; ++r) {
                      if (prev[r] >= 0) std::copy_n(h.row(static_cast<std::size_t>(prev[r])), hidden, hp.row(r));
                    }
                    kernels::gemm_tn(hp.data(), dpre.data(), gwh->data(), n, hidden, g4);
                  }
                  if (requires_[x.id]) kernels::gemm_nt(dpre.data(), value(w_input).data(), grad(x).data(), n, g4, in);
                  if (requires_[w_input.id]) kernels::gemm_tn(value(x).data(), dpre.data(), grad(w_input).data(), n, in, g4);
                  if (requires_[bias.id]) {
                    auto& gb = grad(bias);
                    for (std::size_t r = 0; r < n; ++r) kernels::axpy(T(1), dpre.row(r), gb.data(), g4);
                  }
                });
}

template <class T>
Var Tape<T>::attention(Var q, Var k, Var v, std::size_t heads, std::shared_ptr<const NeighborLists> neighbor_lists) {
  const NeighborLists& neighbors = *neighbor_lists;
  const auto& qv = value(q);
  const auto& kv = value(k);
  const auto& vv = value(v);
  const std::size_t n = qv.rows(), d = qv.cols();
  if (heads == 0 || d % heads != 0) fail(ErrorKind::ShapeMismatch, "attention heads must divide width");
  if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows() || neighbors.size() != n) {
    fail(ErrorKind::ShapeMismatch, "attention operand shapes");
  }
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<std::size_t> offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offset[i + 1] = offset[i] + neighbors[i].size() * heads;
  std::vector<T> probs(offset[n]);
  Tensor<T> out = Tensor<T>::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = neighbors[i];
    const std::size_t m = nb.size();
    for (std::size_t h = 0; h < heads; ++h) {
      T* p = probs.data() + offset[i] + h * m;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        p[j] = scale * kernels::dot(qv.row(i) + h * dh, kv.row(nb[j]) + h * dh, dh);
        mx = std::max(mx, p[j]);
      }
      T z = 0;
      for (std::size_t j = 0; j < m; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < m; ++j) {
        p[j] /= z;
        kernels::axpy(p[j], vv.row(nb[j]) + h * dh, out.row(i) + h * dh, dh);
      }
    }
  }
  return record(std::move(out), {q, k, v},
                [this, q, k, v, n, heads, dh, scale, offset = std::move(offset), probs = std::move(probs),
                 lists = std::move(neighbor_lists)](Var o) {
                  const NeighborLists& nbrs = *lists;
                  const auto& g = grads_[o.id];
                  const auto& qv2 = value(q);
                  const auto& kv2 = value(k);
                  const auto& vv2 = value(v);
                  Tensor<T>& gq = grad(q);
                  Tensor<T>& gk = grad(k);
                  Tensor<T>& gv = grad(v);
                  std::vector<T> ds;
                  for (std::size_t i = 0; i < n; ++i) {
                    const auto& nb = nbrs[i];
                    const std::size_t m = nb.size();
                    ds.resize(m);
                    for (std::size_t h = 0; h < heads; ++h) {
                      const T* p = probs.data() + offset[i] + h * m;
                      const T* gi = g.row(i) + h * dh;
                      T acc = 0;
                      for (std::size_t j = 0; j < m; ++j) {
                        ds[j] = kernels::dot(gi, vv2.row(nb[j]) + h * dh, dh);
                        acc += p[j] * ds[j];
                        kernels::axpy(p[j], gi, gv.row(nb[j]) + h * dh, dh);
                      }
                      for (std::size_t j = 0; j < m; ++j) {
                        const T dsj = p[j] * (ds[j] - acc) * scale;
                        kernels::axpy(dsj, kv2.row(nb[j]) + h * dh, gq.row(i) + h * dh, dh);
                        kernels::axpy(dsj, qv2.row(i) + h * dh, gk.row(nb[j]) + h * dh, dh);
                      }
                    }
                  }
                });
}

template <class T>
Tensor<T> dense_masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                                 const std::vector<bool>& mask) {
  const std::size_t n = q.rows(), d = q.cols(), dh = d / heads;
  if (mask.size() != n * k.rows()) fail(ErrorKind::ShapeMismatch, "mask size");
  const std::size_t nk = k.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const T neg_inf = -std::numeric_limits<T>::infinity();
  Tensor<T> out = Tensor<T>::matrix(n, d);
  std::vector<T> scores(nk);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      T mx = neg_inf;
      for (std::size_t j = 0; j < nk; ++j) {
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
        scores[j] = mask[i * nk + j] ? s * scale : neg_inf;
        mx = std::max(mx, scores[j]);
      }
      T z = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      for (std::size_t c = 0; c < dh; ++c) {
        T acc = 0;
        for (std::size_t j = 0; j < nk; ++j) acc += scores[j] / z * v.at(j, h * dh + c);
        out.at(i, h * dh + c) = acc;
      }
    }
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;
template Tensor<float> dense_masked_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                              std::size_t, const std::vector<bool>&);
template Tensor<double> dense_masked_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                               std::size_t, const std::vector<bool>&);

}  // namespace surt

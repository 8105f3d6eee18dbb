#include "sing/tape.hpp"

#include <cmath>
#include <string>

namespace sing::nn {

namespace {

void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor* bias,
                       int k, int stride, int pad, bool transposed) {
  if (k < 1 || stride < 1 || pad < 0)
    throw ShapeError("conv1d: bad kernel/stride/pad");
  const int cin = x.ch;
  if (transposed) {
    if (w.ch != cin || w.len % k != 0)
      throw ShapeError("conv1d_transpose: weight shape mismatch");
  } else {
    if (w.len != cin * k)
      throw ShapeError("conv1d: weight shape mismatch (expected in*k = " +
                       std::to_string(cin * k) + ", got " +
                       std::to_string(w.len) + ")");
    if (x.len + 2 * pad < k)
      throw ShapeError("conv1d: input too short for kernel");
  }
  if (bias) {
    const int cout = transposed ? w.len / k : w.ch;
    if (bias->ch != cout || bias->len != 1)
      throw ShapeError("conv1d: bias shape mismatch");
  }
}

// Valid loop range [t0, t1) over `count` positions such that
// 0 <= t*stride + off < tin.
std::pair<int, int> tap_range(int count, int stride, int off, int tin) {
  if (off >= tin) return {0, 0};
  int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
  int t1 = (tin - 1 - off) / stride + 1;
  if (t1 > count) t1 = count;
  if (t0 > t1) t0 = t1;
  return {t0, t1};
}

void conv_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                  int k, int stride, int pad, Tensor& out) {
  const int cin = x.ch;
  const int cout = out.ch;
  const int tout = out.len;
  const int tin = x.len;
  for (int co = 0; co < cout; ++co) {
    double* orow = out.v.data() + static_cast<std::size_t>(co) * tout;
    const double b = bias ? bias->v[co] : 0.0;
    for (int t = 0; t < tout; ++t) orow[t] = b;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xrow = x.v.data() + static_cast<std::size_t>(ci) * tin;
      const double* wrow =
          w.v.data() + static_cast<std::size_t>(co) * w.len + ci * k;
      for (int j = 0; j < k; ++j) {
        const double wv = wrow[j];
        if (wv == 0.0) continue;
        const int off = j - pad;
        const auto [t0, t1] = tap_range(tout, stride, off, tin);
        for (int t = t0; t < t1; ++t) orow[t] += wv * xrow[t * stride + off];
      }
    }
  }
}

// Adjoint of conv_forward w.r.t. x: scatter gout back through the kernel.
void conv_backward_x(const Tensor& gout, const Tensor& w, int k, int stride,
                     int pad, Tensor& gx) {
  const int cin = gx.ch;
  const int cout = gout.ch;
  const int tout = gout.len;
  const int tin = gx.len;
  for (int co = 0; co < cout; ++co) {
    const double* grow = gout.v.data() + static_cast<std::size_t>(co) * tout;
    for (int ci = 0; ci < cin; ++ci) {
      double* xrow = gx.v.data() + static_cast<std::size_t>(ci) * tin;
      const double* wrow =
          w.v.data() + static_cast<std::size_t>(co) * w.len + ci * k;
      for (int j = 0; j < k; ++j) {
        const double wv = wrow[j];
        if (wv == 0.0) continue;
        const int off = j - pad;
        const auto [t0, t1] = tap_range(tout, stride, off, tin);
        for (int t = t0; t < t1; ++t) xrow[t * stride + off] += wv * grow[t];
      }
    }
  }
}

void conv_backward_w(const Tensor& gout, const Tensor& x, int k, int stride,
                     int pad, Tensor& gw) {
  const int cin = x.ch;
  const int cout = gout.ch;
  const int tout = gout.len;
  const int tin = x.len;
  for (int co = 0; co < cout; ++co) {
    const double* grow = gout.v.data() + static_cast<std::size_t>(co) * tout;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xrow = x.v.data() + static_cast<std::size_t>(ci) * tin;
      double* wrow =
          gw.v.data() + static_cast<std::size_t>(co) * gw.len + ci * k;
      for (int j = 0; j < k; ++j) {
        const int off = j - pad;
        const auto [t0, t1] = tap_range(tout, stride, off, tin);
        double acc = 0.0;
        for (int t = t0; t < t1; ++t) acc += grow[t] * xrow[t * stride + off];
        wrow[j] += acc;
      }
    }
  }
}

void conv_backward_bias(const Tensor& gout, Tensor& gb) {
  for (int co = 0; co < gout.ch; ++co) {
    double acc = 0.0;
    const double* grow =
        gout.v.data() + static_cast<std::size_t>(co) * gout.len;
    for (int t = 0; t < gout.len; ++t) acc += grow[t];
    gb.v[co] += acc;
  }
}

}  // namespace

int conv1d_out_len(int in_len, int k, int stride, int pad) {
  return (in_len + 2 * pad - k) / stride + 1;
}

int conv1d_transpose_out_len(int in_len, int k, int stride, int pad) {
  return (in_len - 1) * stride + k - 2 * pad;
}

VId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<VId>(nodes_.size() - 1);
}

VId Tape::leaf(Tensor value, bool needs_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

Tensor& Tape::g(VId id) {
  Node& n = nodes_[id];
  if (n.grad.ch == 0) n.grad = Tensor(n.value.ch, n.value.len);
  return n.grad;
}

const Tensor& Tape::grad(VId id) const {
  static const Tensor kEmpty;
  return nodes_[id].grad.ch == 0 ? kEmpty : nodes_[id].grad;
}

VId Tape::conv1d(VId x, VId w, VId bias, int k, int stride, int pad) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor* bv = bias == kNoId ? nullptr : &nodes_[bias].value;
  check_conv_shapes(xv, wv, bv, k, stride, pad, false);
  Node n;
  n.op = Op::kConv;
  n.a = x;
  n.b = w;
  n.c = bias;
  n.k = k;
  n.stride = stride;
  n.pad = pad;
  n.value = Tensor(wv.ch, conv1d_out_len(xv.len, k, stride, pad));
  conv_forward(xv, wv, bv, k, stride, pad, n.value);
  n.needs_grad = recording_ && (wants(x) || wants(w) || wants(bias));
  return push(std::move(n));
}

VId Tape::conv1d_transpose(VId x, VId w, VId bias, int k, int stride,
                           int pad) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor* bv = bias == kNoId ? nullptr : &nodes_[bias].value;
  check_conv_shapes(xv, wv, bv, k, stride, pad, true);
  const int cout = wv.len / k;
  const int tout = conv1d_transpose_out_len(xv.len, k, stride, pad);
  if (tout < 1) throw ShapeError("conv1d_transpose: empty output");
  Node n;
  n.op = Op::kConvTranspose;
  n.a = x;
  n.b = w;
  n.c = bias;
  n.k = k;
  n.stride = stride;
  n.pad = pad;
  n.value = Tensor(cout, tout);
  // Transposed conv output = conv_backward_x of a conv mapping cout -> cin,
  // so reuse the scatter kernel, then add the bias.
  conv_backward_x(xv, wv, k, stride, pad, n.value);
  if (bv) {
    for (int co = 0; co < cout; ++co) {
      double* orow = n.value.v.data() + static_cast<std::size_t>(co) * tout;
      for (int t = 0; t < tout; ++t) orow[t] += bv->v[co];
    }
  }
  n.needs_grad = recording_ && (wants(x) || wants(w) || wants(bias));
  return push(std::move(n));
}

VId Tape::sigmoid(VId x) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = x;
  const Tensor& xv = nodes_[x].value;
  n.value = Tensor(xv.ch, xv.len);
  for (std::size_t i = 0; i < xv.v.size(); ++i)
    n.value.v[i] = 1.0 / (1.0 + std::exp(-xv.v[i]));
  n.needs_grad = recording_ && wants(x);
  return push(std::move(n));
}

VId Tape::tanh(VId x) {
  Node n;
  n.op = Op::kTanh;
  n.a = x;
  const Tensor& xv = nodes_[x].value;
  n.value = Tensor(xv.ch, xv.len);
  for (std::size_t i = 0; i < xv.v.size(); ++i)
    n.value.v[i] = std::tanh(xv.v[i]);
  n.needs_grad = recording_ && wants(x);
  return push(std::move(n));
}

VId Tape::add(VId a, VId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = Tensor(av.ch, av.len);
  for (std::size_t i = 0; i < av.v.size(); ++i)
    n.value.v[i] = av.v[i] + bv.v[i];
  n.needs_grad = recording_ && (wants(a) || wants(b));
  return push(std::move(n));
}

VId Tape::mul(VId a, VId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.value = Tensor(av.ch, av.len);
  for (std::size_t i = 0; i < av.v.size(); ++i)
    n.value.v[i] = av.v[i] * bv.v[i];
  n.needs_grad = recording_ && (wants(a) || wants(b));
  return push(std::move(n));
}

VId Tape::concat_ch(VId a, VId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (av.len != bv.len) throw ShapeError("concat_ch: length mismatch");
  Node n;
  n.op = Op::kConcat;
  n.a = a;
  n.b = b;
  n.value = Tensor(av.ch + bv.ch, av.len);
  std::copy(av.v.begin(), av.v.end(), n.value.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), n.value.v.begin() + av.v.size());
  n.needs_grad = recording_ && (wants(a) || wants(b));
  return push(std::move(n));
}

VId Tape::global_avg_time(VId x) {
  const Tensor& xv = nodes_[x].value;
  Node n;
  n.op = Op::kGlobalAvg;
  n.a = x;
  n.value = Tensor(xv.ch, 1);
  for (int c = 0; c < xv.ch; ++c) {
    double acc = 0.0;
    for (int t = 0; t < xv.len; ++t) acc += xv.at(c, t);
    n.value.v[c] = acc / xv.len;
  }
  n.needs_grad = recording_ && wants(x);
  return push(std::move(n));
}

VId Tape::sum(VId x) {
  const Tensor& xv = nodes_[x].value;
  Node n;
  n.op = Op::kSum;
  n.a = x;
  double acc = 0.0;
  for (double d : xv.v) acc += d;
  n.value = Tensor::scalar(acc);
  n.needs_grad = recording_ && wants(x);
  return push(std::move(n));
}

VId Tape::scale(VId x, double a) {
  const Tensor& xv = nodes_[x].value;
  Node n;
  n.op = Op::kScale;
  n.a = x;
  n.alpha = a;
  n.value = Tensor(xv.ch, xv.len);
  for (std::size_t i = 0; i < xv.v.size(); ++i) n.value.v[i] = a * xv.v[i];
  n.needs_grad = recording_ && wants(x);
  return push(std::move(n));
}

void Tape::back_node(VId id) {
  Node& n = nodes_[id];
  const Tensor& go = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kConv: {
      if (wants(n.a))
        conv_backward_x(go, nodes_[n.b].value, n.k, n.stride, n.pad, g(n.a));
      if (wants(n.b))
        conv_backward_w(go, nodes_[n.a].value, n.k, n.stride, n.pad, g(n.b));
      if (wants(n.c)) conv_backward_bias(go, g(n.c));
      break;
    }
    case Op::kConvTranspose: {
      // Forward was a scatter, so the x-adjoint is the gather (plain conv).
      if (wants(n.a)) {
        Tensor tmp(nodes_[n.a].value.ch, nodes_[n.a].value.len);
        conv_forward(go, nodes_[n.b].value, nullptr, n.k, n.stride, n.pad,
                     tmp);
        Tensor& gx = g(n.a);
        for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += tmp.v[i];
      }
      if (wants(n.b))
        conv_backward_w(nodes_[n.a].value, go, n.k, n.stride, n.pad, g(n.b));
      if (wants(n.c)) conv_backward_bias(go, g(n.c));
      break;
    }
    case Op::kSigmoid: {
      Tensor& gx = g(n.a);
      for (std::size_t i = 0; i < go.v.size(); ++i) {
        const double y = n.value.v[i];
        gx.v[i] += go.v[i] * y * (1.0 - y);
      }
      break;
    }
    case Op::kTanh: {
      Tensor& gx = g(n.a);
      for (std::size_t i = 0; i < go.v.size(); ++i) {
        const double y = n.value.v[i];
        gx.v[i] += go.v[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::kAdd: {
      if (wants(n.a)) {
        Tensor& ga = g(n.a);
        for (std::size_t i = 0; i < go.v.size(); ++i) ga.v[i] += go.v[i];
      }
      if (wants(n.b)) {
        Tensor& gb = g(n.b);
        for (std::size_t i = 0; i < go.v.size(); ++i) gb.v[i] += go.v[i];
      }
      break;
    }
    case Op::kMul: {
      if (wants(n.a)) {
        Tensor& ga = g(n.a);
        const Tensor& bv = nodes_[n.b].value;
        for (std::size_t i = 0; i < go.v.size(); ++i)
          ga.v[i] += go.v[i] * bv.v[i];
      }
      if (wants(n.b)) {
        Tensor& gb = g(n.b);
        const Tensor& av = nodes_[n.a].value;
        for (std::size_t i = 0; i < go.v.size(); ++i)
          gb.v[i] += go.v[i] * av.v[i];
      }
      break;
    }
    case Op::kConcat: {
      const std::size_t asz = nodes_[n.a].value.v.size();
      if (wants(n.a)) {
        Tensor& ga = g(n.a);
        for (std::size_t i = 0; i < asz; ++i) ga.v[i] += go.v[i];
      }
      if (wants(n.b)) {
        Tensor& gb = g(n.b);
        for (std::size_t i = 0; i < gb.v.size(); ++i)
          gb.v[i] += go.v[asz + i];
      }
      break;
    }
    case Op::kGlobalAvg: {
      Tensor& gx = g(n.a);
      const double inv = 1.0 / gx.len;
      for (int c = 0; c < gx.ch; ++c) {
        const double gc = go.v[c] * inv;
        double* row = gx.v.data() + static_cast<std::size_t>(c) * gx.len;
        for (int t = 0; t < gx.len; ++t) row[t] += gc;
      }
      break;
    }
    case Op::kSum: {
      Tensor& gx = g(n.a);
      const double gs = go.v[0];
      for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += gs;
      break;
    }
    case Op::kScale: {
      Tensor& gx = g(n.a);
      for (std::size_t i = 0; i < go.v.size(); ++i)
        gx.v[i] += n.alpha * go.v[i];
      break;
    }
  }
}

void Tape::backward(const std::vector<std::pair<VId, double>>& seeds) {
  if (!recording_) throw Error("backward on a non-recording tape");
  VId top = kNoId;
  for (const auto& [id, seed] : seeds) {
    const Node& n = nodes_[id];
    if (n.value.ch != 1 || n.value.len != 1)
      throw ShapeError("backward: seed node is not a scalar");
    if (!n.needs_grad) continue;
    g(id).v[0] += seed;
    if (id > top) top = id;
  }
  for (VId id = top; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.ch == 0 || n.op == Op::kLeaf) continue;
    back_node(id);
  }
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor* bias, int k,
              int stride, int pad) {
  Tape t(false);
  VId xv = t.leaf(x);
  VId wv = t.leaf(w);
  VId bv = bias ? t.leaf(*bias) : kNoId;
  return t.val(t.conv1d(xv, wv, bv, k, stride, pad));
}

Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor* bias,
                        int k, int stride, int pad) {
  Tape t(false);
  VId xv = t.leaf(x);
  VId wv = t.leaf(w);
  VId bv = bias ? t.leaf(*bias) : kNoId;
  return t.val(t.conv1d_transpose(xv, wv, bv, k, stride, pad));
}

}  // namespace sing::nn

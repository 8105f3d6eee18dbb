#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sing/tensor.hpp"

namespace sing::nn {

using VId = std::int32_t;
inline constexpr VId kNoId = -1;

// Reverse-mode tape. Ops append nodes whose inputs always have smaller ids,
// so creation order is a topological order and one reverse sweep computes
// every adjoint. With recording off the tape is just an eager evaluator.
//
// Convolutions use the cross-correlation convention (no kernel flip).
// Weight layout for conv1d: w.ch = out channels, w.len = in_channels * k.
// Weight layout for conv1d_transpose: w.ch = in channels, w.len = out * k,
// which makes conv1d_transpose(y; w) the exact adjoint of conv1d(x; w).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  VId leaf(Tensor value, bool needs_grad = false);

  // out[co][t'] = bias[co] + sum_{ci,j} x[ci][t'*s + j - p] * w[co][ci*k + j]
  // with T' = floor((T + 2p - k)/s) + 1. Pass kNoId for no bias.
  VId conv1d(VId x, VId w, VId bias, int k, int stride, int pad);

  // out[co][u] = bias[co] + sum_{ci,t,j : t*s + j - p = u} x[ci][t]*w[ci][co*k+j]
  // with T'' = (T - 1)*s + k - 2p.
  VId conv1d_transpose(VId x, VId w, VId bias, int k, int stride, int pad);

  VId sigmoid(VId x);
  VId tanh(VId x);
  VId add(VId a, VId b);
  VId mul(VId a, VId b);
  VId concat_ch(VId a, VId b);
  VId global_avg_time(VId x);  // CxT -> Cx1
  VId sum(VId x);              // -> 1x1
  VId scale(VId x, double a);

  // Seeds each (node, weight) pair and runs one reverse sweep. Every listed
  // node must be 1x1.
  void backward(const std::vector<std::pair<VId, double>>& seeds);
  void backward(VId root, double seed = 1.0) { backward({{root, seed}}); }

  const Tensor& val(VId id) const { return nodes_[id].value; }
  const Tensor& grad(VId id) const;
  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kConv,
    kConvTranspose,
    kSigmoid,
    kTanh,
    kAdd,
    kMul,
    kConcat,
    kGlobalAvg,
    kSum,
    kScale,
  };

  struct Node {
    Op op = Op::kLeaf;
    VId a = kNoId, b = kNoId, c = kNoId;  // inputs: x, w, bias
    int k = 0, stride = 1, pad = 0;
    double alpha = 1.0;  // kScale factor
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
  };

  VId push(Node n);
  bool wants(VId id) const { return id != kNoId && nodes_[id].needs_grad; }
  Tensor& g(VId id);  // grad buffer, allocated on demand
  void back_node(VId id);

  std::vector<Node> nodes_;
  bool recording_;
};

// Eager convenience wrappers over a non-recording tape. bias may be null.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor* bias, int k,
              int stride, int pad);
Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor* bias,
                        int k, int stride, int pad);

// Shape laws, shared by forward code and tests.
int conv1d_out_len(int in_len, int k, int stride, int pad);
int conv1d_transpose_out_len(int in_len, int k, int stride, int pad);

}  // namespace sing::nn

#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "fsga/tensor.hpp"

namespace fsga {

// Handle into a Graph's node tape.
struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Dynamic reverse-mode tape over Tensors. A Graph is built per evaluation
// (one per optimizer phase during training), then backward() runs the tape
// in reverse. Parameters registered via param() accumulate gradients that
// the caller harvests with param_grad(); registering the same storage
// pointer twice returns the same node, so repeated use of a parameter in
// one graph accumulates naturally.
class Graph {
 public:
  Value input(Tensor t);
  // `storage` must outlive the graph. trainable=false keeps the node out of
  // the gradient flow entirely (used for frozen and opposite-phase models).
  Value param(Tensor* storage, bool trainable);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, float s);
  Value neg(Value a) { return scale(a, -1.0f); }
  Value matmul(Value a, Value b);
  // x:(N,I) w:(I,O) b:(O) -> (N,O)
  Value dense(Value x, Value w, Value b);
  // x:(N,C,H,W) w:(O,C,k,k) b:(O) -> (N,O,Ho,Wo); Ho=(H+2p-k)/s+1 (floor)
  Value conv2d(Value x, Value w, Value b, int stride, int pad);
  Value upsample2(Value x);
  Value leaky_relu(Value x, float alpha);
  Value tanh_act(Value x);
  Value softplus(Value x);
  Value mean_all(Value x);                      // -> (1)
  Value mean_per_sample(Value x);               // (N,...) -> (N,1)
  Value reshape(Value x, std::vector<int> shape);
  // Distance-consistency term: per layer, cosine-similarity rows of the
  // adapted activations (N x feat, flattened per sample) are softmaxed over
  // j != i and pulled toward fixed source distributions via KL(adapted||source),
  // summed over layers and instances. source_probs[l] is row-major N x (N-1).
  Value dist_consistency(const std::vector<Value>& adapted_acts,
                         const std::vector<std::vector<double>>& source_probs);

  const Tensor& val(Value v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
  // Gradient of the last backward() target w.r.t. this node (zeros if none).
  const Tensor& grad(Value v);
  void backward(Value scalar_loss);
  // Accumulated gradient for a registered trainable parameter, nullptr if
  // the parameter never entered this graph.
  const Tensor* param_grad(const Tensor* storage) const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::function<void(Graph&)> back;
  };

  int push(Tensor value, bool requires_grad, std::function<void(Graph&)> back);
  Node& node(int i) { return nodes_[static_cast<size_t>(i)]; }
  Tensor& gbuf(int i);  // lazily-allocated gradient buffer
  bool needs(int i) const { return nodes_[static_cast<size_t>(i)].requires_grad; }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> param_nodes_;
};

}  // namespace fsga

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "aptkit/matrix.hpp"

namespace aptkit {

// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Value {
  std::size_t idx = static_cast<std::size_t>(-1);
};

// Eager reverse-mode tape over Matrix. Forward results are computed
// immediately through the counted kernels; each op also records how to push a
// cotangent back to its parents. Gradients flow only into nodes built from
// `leaf`; `constant` marks frozen data, which never receives or propagates a
// gradient. The backward sweep itself is uncounted bookkeeping.
class Tape {
 public:
  Value leaf(Matrix m, std::string name);
  Value constant(Matrix m);

  Value matmul(Value a, Value b);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value hadamard(Value a, Value b);
  Value scale(Value a, double c);
  // Multiplies a by the single entry of s (shape 1 x 1).
  Value scale_by(Value a, Value s);
  Value transpose(Value a);
  Value concat_rows(Value a, Value b);
  Value slice_rows(Value a, std::size_t begin, std::size_t end);
  Value softmax_rows(Value a);
  Value relu(Value a);
  // 1 x 1 result. The subgradient routes to the first maximal entry in
  // row-major order, matching how ties resolve in the forward kernel.
  Value global_max(Value a);
  // 1 x 1 -> 1 x 1 exponential.
  Value exp_scalar(Value a);
  // 1 x 1 sum of all entries.
  Value reduce_sum(Value a);

  const Matrix& value(Value v) const;
  // Accumulated gradient after backward(); zeros if none reached the node.
  Matrix grad(Value v) const;

  // Seeds d(loss)/d(loss) = 1 on a 1 x 1 node and sweeps the tape in reverse.
  // Clears any gradients from a previous sweep first.
  void backward(Value loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix val;
    Matrix grad;  // empty until something accumulates into it
    bool needs_grad = false;
    std::string name;
    std::function<void(Tape&, std::size_t)> vjp;
  };

  Value push(Matrix val, bool needs_grad, std::function<void(Tape&, std::size_t)> vjp);
  const Node& node(Value v) const;
  void accumulate(std::size_t idx, const Matrix& g);

  std::vector<Node> nodes_;
};

}  // namespace aptkit

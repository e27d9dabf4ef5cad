#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "convseq/tensor.h"

namespace convseq {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Reverse-mode tape. Operations append nodes in execution order; backward()
/// walks them in exact reverse order and accumulates vector-Jacobian products.
/// A tape is single-owner: one forward/backward pass at a time.
class Tape {
 public:
  /// Given the output gradient, returns one gradient per input (an empty Tensor
  /// for inputs that do not require a gradient).
  using BackwardFn = std::function<std::vector<Tensor>(const Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(const char* op, Tensor out, std::vector<Var> inputs, BackwardFn backward);

  /// Computes d(loss)/d(v) for every node reachable from a scalar loss.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient from the last backward(); zeros if the node received none.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  /// Node ids whose backward ran during the last backward(), in visit order.
  const std::vector<std::size_t>& backward_trace() const { return trace_; }

  /// When set (the default), every forward and backward result is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  /// When set, piecewise-linear ops fold which linear piece each input fell on
  /// into branch_signature(). Equal signatures mean two evaluations of the same
  /// graph stayed on the same pieces.
  void set_track_branches(bool on) { track_branches_ = on; }
  bool tracking_branches() const { return track_branches_; }
  void note_branch(unsigned piece) { branch_signature_ = (branch_signature_ ^ piece) * 0x100000001b3ULL; }
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  struct Node {
    const char* op = "leaf";
    Tensor value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    std::vector<Shape> input_shapes;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<std::size_t> trace_;
  bool check_finite_ = true;
  bool track_branches_ = false;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

}  // namespace convseq

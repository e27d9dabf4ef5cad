#include "convseq/autograd.h"

#include <string>

namespace convseq {

const Tensor& Var::value() const { return tape->value(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (check_finite_ && !value.all_finite()) throw NumericError("non-finite leaf value");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Tensor out, std::vector<Var> inputs, BackwardFn backward) {
  if (check_finite_ && !out.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite forward result");
  }
  Node n;
  n.op = op;
  n.value = std::move(out);
  for (const Var& in : inputs) {
    if (in.tape != this) throw std::logic_error(std::string(op) + ": input belongs to another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) {
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
      n.inputs.push_back(in.id);
      n.input_shapes.push_back(nodes_[in.id].value.shape());
    }
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::logic_error("backward: loss belongs to another tape");
  if (nodes_[loss.id].value.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_str(nodes_[loss.id].value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  trace_.clear();
  grads_[loss.id] = Tensor::full(nodes_[loss.id].value.shape(), Real(1));

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || grads_[id].empty()) continue;
    trace_.push_back(id);
    std::vector<Tensor> gin = n.backward(*this, grads_[id]);
    if (gin.size() != n.inputs.size()) {
      throw std::logic_error(std::string(n.op) + ": backward returned wrong gradient count");
    }
    for (std::size_t k = 0; k < gin.size(); ++k) {
      if (gin[k].empty()) continue;
      const std::size_t src = n.inputs[k];
      if (gin[k].shape() != n.input_shapes[k]) {
        throw ShapeError(std::string(n.op) + ": gradient shape " + shape_str(gin[k].shape()) +
                         " differs from forward input shape " + shape_str(n.input_shapes[k]));
      }
      if (check_finite_ && !gin[k].all_finite()) {
        throw NumericError(std::string(n.op) + ": non-finite gradient");
      }
      if (!nodes_[src].requires_grad) continue;
      Tensor& acc = grads_[src];
      if (acc.empty()) {
        acc = std::move(gin[k]);
      } else {
        auto dst = acc.data();
        auto add = gin[k].data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += add[i];
      }
    }
  }
}

Tensor Tape::grad(Var v) const {
  if (v.id < grads_.size() && !grads_[v.id].empty()) return grads_[v.id];
  return Tensor::zeros(nodes_[v.id].value.shape());
}

bool Tape::has_grad(Var v) const { return v.id < grads_.size() && !grads_[v.id].empty(); }

}  // namespace convseq

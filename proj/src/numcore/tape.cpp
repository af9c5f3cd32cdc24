#include "sdat/numcore/tape.hpp"

#include "sdat/numcore/errors.hpp"

namespace sdat {

namespace {
thread_local Tape* current_tape = nullptr;
}

Tape* active_tape() { return current_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(current_tape) { current_tape = nullptr; }
NoGradScope::~NoGradScope() { current_tape = previous_; }

void Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(backward)});
}

std::size_t Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward requires a scalar root, got " +
                        (root.defined() ? to_string(root.shape()) : std::string("undefined")));
  }
  Tensor seed = root;
  seed.mutable_grad()[0] = 1.0;
  std::size_t visited = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    ++visited;
    if (it->output.has_grad()) it->backward();
  }
  return visited;
}

void backward(const Tensor& root, Tape& tape) { tape.backward(root); }

}  // namespace sdat

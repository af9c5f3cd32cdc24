#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "sdat/numcore/tensor.hpp"

namespace sdat {

/// Ordered record of differentiable operations.
///
/// Nodes are appended after their output is computed, so the list is
/// topologically ordered by construction. Recording happens only while a
/// Tape is active on the current thread (see TapeScope) and at least one
/// operand requires a gradient.
class Tape {
 public:
  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    /// Reads output's gradient and accumulates into inputs' gradients.
    std::function<void()> backward;
  };

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  void clear() { nodes_.clear(); }

  /// Runs backward over the recorded nodes in reverse order. Returns the
  /// number of nodes visited.
  std::size_t backward(const Tensor& root);

 private:
  std::vector<Node> nodes_;
};

/// The tape receiving operations on this thread, or nullptr.
Tape* active_tape();

/// Activates a tape on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Deactivates recording for the scope (inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Seeds d(root)/d(root) = 1 and propagates through `tape`. Leaf gradients
/// accumulate additively. Throws ContractError unless root is a scalar.
void backward(const Tensor& root, Tape& tape);

}  // namespace sdat

#ifndef ADRS_AUTOGRAD_HPP_
#define ADRS_AUTOGRAD_HPP_

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adrs/tensor.hpp"

namespace adrs {

/// Named real tensor with a recorded shape.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;

  std::size_t count() const;
  bool operator==(const Param&) const = default;
};

/// Ordered collection of named parameters. Insertion order is the
/// serialisation order.
class ModelParams {
 public:
  std::size_t add(std::string name, std::vector<int> shape, std::vector<float> value);
  std::size_t add(std::string name, std::vector<int> shape, float fill);

  bool contains(std::string_view name) const;
  /// Throws ValidationError for an unknown name.
  std::size_t id(std::string_view name) const;
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& at(std::string_view name) const { return params_[id(name)]; }
  Param& at(std::string_view name) { return params_[id(name)]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  const std::vector<Param>& list() const { return params_; }

  bool operator==(const ModelParams& o) const { return params_ == o.params_; }

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Reverse-mode tape over Tensor values. Operations append a node; when the
/// graph records, each node also gets a backward closure. Parameter
/// gradients accumulate inside the graph so the parameters stay read-only.
class Graph {
 public:
  using Var = std::size_t;

  Graph(const ModelParams& params, bool record);

  Var input(Tensor t);
  const Tensor& value(Var v) const { return values_[v]; }
  Tensor take(Var v) { return std::move(values_[v]); }
  /// Frees an intermediate when nothing will be recorded against it.
  void drop(Var v);

  /// 3x3 (zero padding 1) or 1x1 convolution with stride; bias optional
  /// (pass npos).
  Var conv(Var x, std::size_t weight, std::size_t bias, int stride = 1);
  /// Per-channel 3x3 convolution, zero padding 1.
  Var depthwise3x3(Var x, std::size_t weight, std::size_t bias);
  Var instance_norm(Var x, std::size_t gamma, std::size_t beta);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var mul(Var a, Var b);
  Var concat(Var a, Var b);
  /// Bilinear resampling (half-pixel centres). Identity at equal size.
  Var resize(Var x, int height, int width);

  /// Seeds d(loss)/d(var) and runs every recorded closure in reverse.
  void backward(const std::vector<std::pair<Var, Tensor>>& seeds);
  const Tensor& grad(Var v) const { return grads_[v]; }
  /// Accumulated gradient of a parameter (empty when it was never used).
  const std::vector<float>& param_grad(std::size_t id) const { return param_grads_[id]; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  Var push(Tensor t);
  Tensor& grad_of(Var v);
  std::vector<float>& pgrad(std::size_t id);

  const ModelParams& params_;
  bool record_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<std::function<void()>> backward_;
  std::vector<std::vector<float>> param_grads_;
};

}  // namespace adrs

#endif  // ADRS_AUTOGRAD_HPP_

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ovp/autodiff.hpp"
#include "ovp/rng.hpp"
#include "ovp/tensor.hpp"

namespace ovp::nn {

// Named reference to a learnable tensor owned by a layer struct.
struct ParamRef {
  std::string name;
  Tensor* value;
};

// Binds every parameter tensor onto a tape as a leaf Var for one pass.
class Bound {
 public:
  Bound(Tape& tape, const std::vector<ParamRef>& refs, bool requires_grad);

  Var operator[](const Tensor& t) const;
  Var var_at(std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }

 private:
  std::unordered_map<const Tensor*, std::size_t> index_;
  std::vector<Var> vars_;
};

struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  Var operator()(Tape& t, const Bound& bp, Var x) const;
};

struct Linear {
  Tensor w, b;

  Linear() = default;
  // weight_scale 0 gives an exactly-zero layer (identity rollouts at init).
  Linear(int in_dim, int out_dim, Rng& rng, double weight_scale = 1.0);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  Var operator()(Tape& t, const Bound& bp, Var x) const;
};

// Perceptron with silu hidden activations and a linear head.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng,
      double last_scale = 1.0);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  Var operator()(Tape& t, const Bound& bp, Var x) const;
};

class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void step(const std::vector<ParamRef>& refs, Tape& tape, const Bound& bp);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace ovp::nn

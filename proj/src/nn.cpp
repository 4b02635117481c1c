#include "ovp/nn.hpp"

#include <cmath>

namespace ovp::nn {

Bound::Bound(Tape& tape, const std::vector<ParamRef>& refs,
             bool requires_grad) {
  vars_.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    index_[refs[i].value] = i;
    vars_.push_back(tape.leaf(*refs[i].value, requires_grad));
  }
}

Var Bound::operator[](const Tensor& t) const {
  auto it = index_.find(&t);
  check_data(it != index_.end(), "bound params: tensor was not registered");
  return vars_[it->second];
}

namespace {
Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng,
                    double scale) {
  Tensor t(std::move(shape));
  double limit = scale * std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}
}  // namespace

Conv2d::Conv2d(int in_ch, int out_ch, int k, int stride_, int pad_, Rng& rng)
    : w(uniform_init({out_ch, in_ch, k, k}, in_ch * k * k, rng, 1.0)),
      b(Tensor({out_ch})),
      stride(stride_),
      pad(pad_) {}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w});
  out.push_back({prefix + ".b", &b});
}

Var Conv2d::operator()(Tape& t, const Bound& bp, Var x) const {
  return t.conv2d(x, bp[w], bp[b], stride, pad);
}

Linear::Linear(int in_dim, int out_dim, Rng& rng, double weight_scale)
    : w(weight_scale == 0.0
            ? Tensor({out_dim, in_dim})
            : uniform_init({out_dim, in_dim}, in_dim, rng, weight_scale)),
      b(Tensor({out_dim})) {}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w});
  out.push_back({prefix + ".b", &b});
}

Var Linear::operator()(Tape& t, const Bound& bp, Var x) const {
  return t.linear(x, bp[w], bp[b]);
}

Mlp::Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng,
         double last_scale) {
  int d = in_dim;
  for (int h : hidden) {
    layers.emplace_back(d, h, rng);
    d = h;
  }
  layers.emplace_back(d, out_dim, rng, last_scale);
}

void Mlp::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + ".l" + std::to_string(i), out);
}

Var Mlp::operator()(Tape& t, const Bound& bp, Var x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](t, bp, h);
    if (i + 1 < layers.size()) h = t.silu(h);
  }
  return h;
}

void Adam::step(const std::vector<ParamRef>& refs, Tape& tape,
                const Bound& bp) {
  if (m_.empty()) {
    for (const ParamRef& r : refs) {
      m_.emplace_back(r.value->shape);
      v_.emplace_back(r.value->shape);
    }
  }
  check_data(m_.size() == refs.size(), "adam: parameter set changed size");
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Tensor& theta = *refs[i].value;
    Var pv = bp.var_at(i);
    // A parameter can legitimately receive no gradient (an unused branch);
    // treat that as zero.
    const bool has_grad = tape.has_grad(pv.id);
    for (std::int64_t j = 0; j < theta.size(); ++j) {
      double g = has_grad ? tape.grad(pv.id).data[j] : 0.0;
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
      double& m = m_[i].data[j];
      double& v = v_[i].data[j];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      double mhat = m / bc1;
      double vhat = v / bc2;
      theta.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace ovp::nn

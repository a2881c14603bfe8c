#include "rsplat/optim.hpp"

#include <algorithm>
#include <cmath>

namespace rsplat {

bool adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 double lr, long step, double beta1, double beta2, double eps) {
  require(params.size() == grads.size() && params.size() == m.size() && params.size() == v.size(),
          "adam_update: shape mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) return false;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
  return true;
}

bool AdamState::step(std::span<double> params, std::span<const double> grads) {
  require(params.size() == grads.size() && params.size() == m.size(), "AdamState::step: shape mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) {
      ++skipped_steps;
      return false;
    }
  }
  ++step_count;
  return adam_update(params, grads, m, v, lr, step_count, beta1, beta2, eps);
}

SmallMlp::SmallMlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "SmallMlp: need at least one layer");
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    require(layers_[i].in > 0 && layers_[i].out > 0, "SmallMlp: layer dims must be positive");
    if (i > 0) require(layers_[i].in == layers_[i - 1].out, "SmallMlp: consecutive layer dims do not chain");
    offsets_.push_back(total);
    total += static_cast<std::size_t>(layers_[i].in) * layers_[i].out + layers_[i].out;
  }
  params_.assign(total, 0.0);
}

void SmallMlp::init_uniform(std::mt19937_64& rng) {
  for (int l = 0; l < static_cast<int>(layers_.size()); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layers_[l].in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    auto b = bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = dist(rng);
  }
}

Eigen::Map<Eigen::MatrixXd> SmallMlp::weight(int l) {
  return Eigen::Map<Eigen::MatrixXd>(params_.data() + offset(l), layers_[l].out, layers_[l].in);
}
Eigen::Map<const Eigen::MatrixXd> SmallMlp::weight(int l) const {
  return Eigen::Map<const Eigen::MatrixXd>(params_.data() + offset(l), layers_[l].out, layers_[l].in);
}
Eigen::Map<Eigen::VectorXd> SmallMlp::bias(int l) {
  return Eigen::Map<Eigen::VectorXd>(params_.data() + offset(l) + layers_[l].in * layers_[l].out, layers_[l].out);
}
Eigen::Map<const Eigen::VectorXd> SmallMlp::bias(int l) const {
  return Eigen::Map<const Eigen::VectorXd>(params_.data() + offset(l) + layers_[l].in * layers_[l].out,
                                           layers_[l].out);
}

namespace {

void activate(Activation act, Eigen::MatrixXd& x) {
  switch (act) {
    case Activation::identity: break;
    case Activation::relu: x = x.cwiseMax(0.0); break;
    case Activation::sigmoid: x = x.unaryExpr([](double v) { return sigmoid(v); }); break;
  }
}

}  // namespace

Eigen::MatrixXd SmallMlp::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  require(x.rows() == input_dim(), "SmallMlp::forward: input dim " + std::to_string(x.rows()) +
                                       " != " + std::to_string(input_dim()));
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < static_cast<int>(layers_.size()); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (tape) {
      tape->inputs.push_back(h);
      tape->pre.push_back(z);
    }
    activate(layers_[l].act, z);
    h = std::move(z);
  }
  if (tape) tape->output = h;
  return h;
}

Eigen::MatrixXd SmallMlp::backward(const Tape& tape, const Eigen::MatrixXd& d_out, std::span<double> d_params) const {
  require(d_params.size() == params_.size(), "SmallMlp::backward: gradient buffer size mismatch");
  require(tape.pre.size() == layers_.size(), "SmallMlp::backward: tape does not match network");
  require(d_out.rows() == output_dim() && d_out.cols() == tape.output.cols(), "SmallMlp::backward: d_out shape");
  Eigen::MatrixXd g = d_out;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const Eigen::MatrixXd& z = tape.pre[l];
    switch (layers_[l].act) {
      case Activation::identity: break;
      case Activation::relu: g = g.cwiseProduct((z.array() > 0.0).cast<double>().matrix()); break;
      case Activation::sigmoid: {
        const Eigen::MatrixXd s = z.unaryExpr([](double v) { return sigmoid(v); });
        g = g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
        break;
      }
    }
    const int in = layers_[l].in, out = layers_[l].out;
    Eigen::Map<Eigen::MatrixXd> dw(d_params.data() + offset(l), out, in);
    Eigen::Map<Eigen::VectorXd> db(d_params.data() + offset(l) + in * out, out);
    dw.noalias() += g * tape.inputs[l].transpose();
    db += g.rowwise().sum();
    g = weight(l).transpose() * g;
  }
  return g;
}

bool SmallMlp::operator==(const SmallMlp& o) const {
  if (layers_.size() != o.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].in != o.layers_[i].in || layers_[i].out != o.layers_[i].out || layers_[i].act != o.layers_[i].act)
      return false;
  return params_ == o.params_;
}

SmallMlp make_mask_mlp(int in_dim, int hidden) {
  return SmallMlp({{in_dim, hidden, Activation::relu}, {hidden, 1, Activation::sigmoid}});
}

SmallMlp make_affine_mlp(int in_dim, int hidden) {
  return SmallMlp({{in_dim, hidden, Activation::relu},
                   {hidden, hidden, Activation::relu},
                   {hidden, 6, Activation::identity}});
}

void init_affine_head(SmallMlp& mlp) {
  const int last = static_cast<int>(mlp.layers().size()) - 1;
  mlp.weight(last).setZero();
  mlp.bias(last).setZero();
}

double exponential_lr(double init, double final, long step, long max_steps) {
  if (max_steps <= 0) return init;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(max_steps), 0.0, 1.0);
  return std::exp(std::log(init) * (1.0 - t) + std::log(final) * t);
}

}  // namespace rsplat
